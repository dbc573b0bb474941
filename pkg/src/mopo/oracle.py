"""Brute-force ground truth on small tabular worlds.

Policies are searched through per-prompt logits relative to ``pi_ref``.  Both
goal functions are convex in the policy (a distance to an upward-closed convex
set composed with the concave map ``S``), so multistart local search is a
safeguard against flat regions and bad conditioning rather than against
spurious minima.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError
from .geometry import (NEG_INF, AggregationSpec, MultiGroupSpec, as_spec_list,
                       project, project_intersection)
from .world import TabularWorld, expected_reward_vector, rewards

TOL_ORACLE = 2e-3
TOL_ORACLE_SPREAD = 1e-3
MAX_CELLS = 64


@dataclass
class OracleResult:
    pi_star: np.ndarray
    value: float
    method: str
    certificate: dict
    world_hash: str
    flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"pi_star": self.pi_star.tolist(), "value": self.value, "method": self.method,
                "certificate": self.certificate, "world_hash": self.world_hash,
                "flags": list(self.flags)}

    @classmethod
    def from_json(cls, obj: dict) -> OracleResult:
        return cls(np.asarray(obj["pi_star"], dtype=float), float(obj["value"]), obj["method"],
                   dict(obj["certificate"]), obj["world_hash"], list(obj.get("flags", [])))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------- shared pieces

def _policy(world, Z):
    logits = np.log(world.pi_ref) + Z
    logits -= logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    return P / P.sum(axis=1, keepdims=True)


def _S_and_jac(world, r, pi):
    """``S(pi)`` and ``dS_i/dpi(x,y)`` up to per-row constants (removed by the softmax)."""
    log_ratio = np.log(np.maximum(pi, 1e-300)) - np.log(world.pi_ref)
    S = np.einsum("x,xy,mxy->m", world.rho, pi, r) - world.beta * world.rho @ np.sum(pi * log_ratio, axis=1)
    jac = world.rho[None, :, None] * (r - world.beta * log_ratio[None])
    return S, jac


def _logit_grad(pi, g_pi):
    return pi * (g_pi - np.sum(pi * g_pi, axis=1, keepdims=True))


def _check_size(world):
    if world.n_prompts * world.n_responses > MAX_CELLS:
        raise DomainError(f"oracle supports at most {MAX_CELLS} prompt-response cells")


def _goal_parts(targets, malfare: bool):
    if malfare:
        if isinstance(targets, AggregationSpec):
            targets = MultiGroupSpec((targets,), [1.0], 1)
        return targets
    return as_spec_list(targets)


def _goal_value_and_grad(targets, S, malfare: bool):
    """Smooth surrogate (squared distance or sum of ``zeta d^{2q}``) and its gradient in ``S``."""
    if not malfare:
        P = project_intersection(targets, S)
        diff = S - P
        return 0.5 * float(diff @ diff), diff
    total, grad = 0.0, np.zeros_like(S)
    for z, g in zip(targets.zeta, targets.groups):
        diff = S - project(g, S)
        d2 = float(diff @ diff)
        total += z * d2 ** targets.q
        grad += z * targets.q * d2 ** (targets.q - 1) * 2.0 * diff
    return total, grad


def _surrogate_to_value(v: float, targets, malfare: bool) -> float:
    if malfare:
        return max(v, 0.0) ** (1.0 / (2 * targets.q))
    return math.sqrt(max(2.0 * v, 0.0))


def _starts(world, restarts: int, seed: int):
    rng = np.random.default_rng(seed)
    shape = (world.n_prompts, world.n_responses)
    yield np.zeros(shape)
    scale = world.B / world.beta if world.B > 0 else 1.0
    for k in range(1, restarts):
        yield rng.normal(scale=scale * (0.25 + k / restarts), size=shape)


def _certificate(values, top: int = 3) -> dict:
    vals = sorted(values)
    best = vals[:top]
    return {"best": vals[0], "top": best, "spread": float(best[-1] - best[0]),
            "restarts": len(vals)}


def _multistart(world, fun, restarts, seed, maxiter):
    results = []
    for Z0 in _starts(world, restarts, seed):
        res = minimize(fun, Z0.ravel(), jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-11})
        results.append((float(res.fun), res.x, bool(res.success) or res.nit >= maxiter))
    return results


# ---------------------------------------------------------------- distance oracles

def _solve_distance(world, targets, malfare, restarts, seed, maxiter, grid):
    _check_size(world)
    targets = _goal_parts(targets, malfare)
    r = rewards(world)
    shape = (world.n_prompts, world.n_responses)

    def fun(z):
        pi = _policy(world, z.reshape(shape))
        S, jac = _S_and_jac(world, r, pi)
        val, gS = _goal_value_and_grad(targets, S, malfare)
        g_pi = np.tensordot(gS, jac, axes=1)
        return val, _logit_grad(pi, g_pi).ravel()

    results = _multistart(world, fun, restarts, seed, maxiter)
    values = [_surrogate_to_value(v, targets, malfare) for v, _, _ in results]
    k = int(np.argmin(values))
    pi = _policy(world, results[k][1].reshape(shape))
    cert = _certificate(values)
    flags = []
    if cert["spread"] > TOL_ORACLE_SPREAD:
        flags.append("restart-spread")
    method = "multistart-gd"
    value = float(values[k])
    if grid and world.n_prompts == 1 and world.n_responses <= 5:
        g_val, g_pi = grid_search(world, targets, malfare=malfare)
        cert["grid_value"] = g_val
        if g_val < value:
            value, pi, method = g_val, g_pi, "dense-grid"
    return OracleResult(pi, value, method, cert, world.hash(), flags)


def solve_consensus(world: TabularWorld, targets, budget: int = 500, *, restarts: int = 32,
                    seed: int = 0, grid: bool = False) -> OracleResult:
    """Minimize the distance from ``S(pi)`` to the intersection of the target sets."""
    return _solve_distance(world, targets, False, restarts, seed, budget, grid)


def solve_malfare(world: TabularWorld, mg, budget: int = 500, *, restarts: int = 32,
                  seed: int = 0, grid: bool = False) -> OracleResult:
    """Minimize ``(sum_n zeta_n d_n^{2q})^{1/(2q)}`` over policies."""
    return _solve_distance(world, mg, True, restarts, seed, budget, grid)


def simplex_grid(n: int, resolution: float = 0.01) -> np.ndarray:
    """All points of the ``n``-simplex whose coordinates are multiples of ``resolution``."""
    k = int(round(1.0 / resolution))
    pts = []
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(k + n - 2 - prev)
        pts.append(row)
    return np.array(pts, dtype=float) / k


def grid_S(world: TabularWorld, P: np.ndarray) -> np.ndarray:
    """``S`` for a batch of single-prompt policies ``P`` of shape ``(n, Y)``."""
    if world.n_prompts != 1:
        raise DomainError("grid evaluation needs a single prompt")
    r = rewards(world)[:, 0, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(P > 0, P * (np.log(P) - np.log(world.pi_ref[0])), 0.0).sum(axis=1)
    return P @ r.T - world.beta * kl[:, None]


def grid_search(world: TabularWorld, targets, *, malfare: bool = False,
                resolution: float = 0.01, chunk: int = 200_000):
    """Dense simplex grid for one-prompt worlds; returns ``(value, best policy)``."""
    targets = _goal_parts(targets, malfare)
    P_all = simplex_grid(world.n_responses, resolution)
    best, best_pi = np.inf, None
    for start in range(0, len(P_all), chunk):
        P = P_all[start:start + chunk]
        S = grid_S(world, P)
        if malfare:
            total = np.zeros(len(P))
            for z, g in zip(targets.zeta, targets.groups):
                d = np.linalg.norm(S - project(g, S), axis=1)
                total += z * d ** (2 * targets.q)
            vals = total ** (1.0 / (2 * targets.q))
        else:
            vals = np.linalg.norm(S - project_intersection(targets, S), axis=1)
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, best_pi = float(vals[k]), P[k][None, :]
    return best, best_pi


# ---------------------------------------------------------------- max-min value

def solve_maxmin(world: TabularWorld, budget: int = 500, *, restarts: int = 8, seed: int = 0,
                 temperatures=(0.1, 0.03, 0.01, 0.003, 0.001)) -> OracleResult:
    """``max_pi min_i S_i(pi)`` by log-sum-exp annealing, then an epigraph polish."""
    _check_size(world)
    r = rewards(world)
    shape = (world.n_prompts, world.n_responses)

    def smooth(z, tau):
        pi = _policy(world, z.reshape(shape))
        S, jac = _S_and_jac(world, r, pi)
        a = -S / tau
        top = a.max()
        w = np.exp(a - top)
        soft_min = -tau * (top + math.log(w.sum()))
        weights = w / w.sum()
        g_pi = np.tensordot(weights, jac, axes=1)
        return -soft_min, -_logit_grad(pi, g_pi).ravel()

    def hard(z):
        pi = _policy(world, z.reshape(shape))
        return expected_reward_vector(world, pi, r)

    values, points = [], []
    for Z0 in _starts(world, restarts, seed):
        z = Z0.ravel()
        for tau in temperatures:
            res = minimize(smooth, z, args=(tau,), jac=True, method="L-BFGS-B",
                           options={"maxiter": budget, "ftol": 1e-15, "gtol": 1e-12})
            z = res.x
        z = _epigraph_polish(world, r, z, shape, budget)
        values.append(float(hard(z).min()))
        points.append(z)
    order = np.argsort(values)[::-1]
    k = int(order[0])
    top = [values[i] for i in order[:3]]
    cert = {"best": values[k], "top": top, "spread": float(top[0] - top[-1]),
            "restarts": len(values)}
    flags = ["restart-spread"] if cert["spread"] > TOL_ORACLE_SPREAD else []
    return OracleResult(_policy(world, points[k].reshape(shape)), values[k], "multistart-gd",
                        cert, world.hash(), flags)


def _epigraph_polish(world, r, z0, shape, budget):
    """Maximize ``t`` subject to ``S_i(pi(z)) >= t`` starting from ``z0``."""
    def S_of(z):
        return expected_reward_vector(world, _policy(world, z.reshape(shape)), r)

    def S_jac(z):
        pi = _policy(world, z.reshape(shape))
        _, jac = _S_and_jac(world, r, pi)
        return np.stack([_logit_grad(pi, jac[i]).ravel() for i in range(world.m)])

    n = z0.size
    x0 = np.append(z0, S_of(z0).min())
    cons = {"type": "ineq",
            "fun": lambda x: S_of(x[:n]) - x[n],
            "jac": lambda x: np.hstack([S_jac(x[:n]), -np.ones((world.m, 1))])}
    obj_grad = np.zeros(n + 1)
    obj_grad[n] = -1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(lambda x: -x[n], x0, jac=lambda x: obj_grad, constraints=[cons],
                       method="SLSQP", options={"maxiter": budget, "ftol": 1e-14})
    z = res.x[:n]
    return z if S_of(z).min() >= S_of(z0).min() else z0


def maxmin_dual(world: TabularWorld, resolution: int = 2000):
    """``min_{lambda in simplex} max_pi lambda.S(pi)``; equals the max-min value by minimax.

    Solved by scipy on softmax weights; ``resolution`` is unused for ``m > 2``
    and sets a fine scan for ``m = 2``.
    """
    from .world import linear_value
    r = rewards(world)
    if world.m == 1:
        return linear_value(world, [1.0], r), np.array([1.0])
    if world.m == 2:
        lam = np.linspace(0.0, 1.0, resolution + 1)
        vals = np.array([linear_value(world, [a, 1 - a], r) for a in lam])
        k = int(np.argmin(vals))
        lo, hi = lam[max(k - 1, 0)], lam[min(k + 1, resolution)]
        from scipy.optimize import minimize_scalar
        res = minimize_scalar(lambda a: linear_value(world, [a, 1 - a], r), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = min((float(res.fun), res.x), (float(vals[k]), lam[k]))
        return best[0], np.array([best[1], 1 - best[1]])
    def f(u):
        w = np.exp(u - u.max())
        return linear_value(world, w / w.sum(), r)
    res = minimize(f, np.zeros(world.m), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000})
    w = np.exp(res.x - res.x.max())
    return float(res.fun), w / w.sum()


# ---------------------------------------------------------------- bound helpers

def support_value(spec: AggregationSpec, theta) -> float:
    """``min_{x in W} <theta, x>`` for ``theta >= 0`` in closed form."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError("support value needs a nonnegative direction")
    a, p, c = spec.alpha, spec.p, spec.c
    pos = a > 0
    if c == 0:
        return 0.0
    if p == NEG_INF:
        return float(c * theta[pos].sum())
    th, al = theta[pos], a[pos]
    if p == 1:
        return float(c * np.min(th / al))
    if np.any(th == 0):
        if p >= 0:
            return 0.0
        keep = th > 0
        th, al = th[keep], al[keep]
    if p == 0:
        # stationarity gives x_i = mu alpha_i / theta_i, and the value is mu
        return float(c * np.exp(np.sum(al * np.log(th / al))))
    u = (th / al) ** (1.0 / (p - 1.0))
    scale = np.sum(al * u ** p) ** (1.0 / p)
    return float(c * (th @ u) / scale)
