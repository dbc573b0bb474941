"""Reward-parameter fits, the reward-free objective and importance-weight MLE.

Preference data is held as count tensors so every likelihood is an exact
weighted sum over distinct (prompt, winner, loser) cells:

* ``pair_counts``  shape ``(m, X, Y, Y)``; entry ``[i, x, w, l]`` counts data for
  objective ``i`` where ``w`` beat ``l`` on prompt ``x``.
* ``index_counts`` shape ``(N, X, Y, Y, m)``; entry ``[n, x, w, l, i]`` counts
  group ``n`` reports of objective ``i`` on that pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

from .errors import DomainError, SolverError
from .geometry import Direction
from .world import (PreferenceDatum, TabularWorld, bt_sample, index_probs,
                    optimal_policy_linear, rewards, sample_pair)

MODES = ("mle", "pessimistic", "optimistic")
TOL_FIT = 1e-7
TOL_ALPHA = 1e-7
MAX_FIT_ITERS = 20_000
ARMIJO_C = 1e-4


@dataclass
class RewardFit:
    theta: np.ndarray
    mode: str
    eta: float
    residual: float
    n_iter: int = 0
    objective: float = float("nan")

    def to_json(self) -> dict:
        return {"theta": self.theta.tolist(), "mode": self.mode, "eta": self.eta,
                "residual": self.residual, "n_iter": self.n_iter,
                "objective": self.objective}

    @classmethod
    def from_json(cls, obj: dict) -> RewardFit:
        return cls(np.asarray(obj["theta"], dtype=float), obj["mode"], float(obj["eta"]),
                   float(obj["residual"]), int(obj.get("n_iter", 0)),
                   float(obj.get("objective", "nan")))


@dataclass
class WeightEstimate:
    alpha_hat: np.ndarray
    loglik: float
    running_mean: np.ndarray
    residual: float = 0.0
    n_iter: int = 0

    def to_json(self) -> dict:
        return {"alpha_hat": self.alpha_hat.tolist(), "loglik": self.loglik,
                "running_mean": self.running_mean.tolist(), "residual": self.residual,
                "n_iter": self.n_iter}

    @classmethod
    def from_json(cls, obj: dict) -> WeightEstimate:
        return cls(np.asarray(obj["alpha_hat"], dtype=float), float(obj["loglik"]),
                   np.asarray(obj["running_mean"], dtype=float),
                   float(obj.get("residual", 0.0)), int(obj.get("n_iter", 0)))


# ---------------------------------------------------------------- datasets

def empty_pair_counts(world: TabularWorld) -> np.ndarray:
    X, Y = world.n_prompts, world.n_responses
    return np.zeros((world.m, X, Y, Y))


def empty_index_counts(world: TabularWorld, n_groups: int) -> np.ndarray:
    X, Y = world.n_prompts, world.n_responses
    return np.zeros((n_groups, X, Y, Y, world.m))


def add_data(pair_counts, index_counts, data) -> None:
    """Accumulate data in place; the reported index decides the objective."""
    for dt in data:
        pair_counts[dt.index, dt.x, dt.y_w, dt.y_l] += 1
        if index_counts is not None:
            index_counts[dt.group, dt.x, dt.y_w, dt.y_l, dt.index] += 1


def counts_from_data(world: TabularWorld, data, n_groups: int = 1):
    pc, ic = empty_pair_counts(world), empty_index_counts(world, n_groups)
    add_data(pc, ic, data)
    return pc, ic


def offline_dataset(world: TabularWorld, M: int, rng: np.random.Generator,
                    behavior=None) -> np.ndarray:
    """``M`` Bradley-Terry comparisons per objective on pairs drawn from ``behavior``.

    ``behavior`` defaults to ``pi_ref``; the two responses are distinct.
    """
    pi = world.pi_ref if behavior is None else np.asarray(behavior)
    r = rewards(world)
    counts = empty_pair_counts(world)
    X, Y = pi.shape
    for i in range(world.m):
        xs = rng.choice(X, size=M, p=world.rho)
        u1, u2, u3 = rng.random(M), rng.random(M), rng.random(M)
        cdf = np.cumsum(pi[xs], axis=1)
        y1 = np.minimum((u1[:, None] > cdf).sum(axis=1), Y - 1)
        rest = pi[xs].copy()
        rest[np.arange(M), y1] = 0.0
        cdf2 = np.cumsum(rest, axis=1) / rest.sum(axis=1, keepdims=True)
        y2 = np.minimum((u2[:, None] > cdf2).sum(axis=1), Y - 1)
        win = u3 < expit(r[i, xs, y1] - r[i, xs, y2])
        w, l = np.where(win, y1, y2), np.where(win, y2, y1)
        np.add.at(counts[i], (xs, w, l), 1.0)
    return counts


# ---------------------------------------------------------------- likelihoods

def _diff(r):
    return r[..., :, None] - r[..., None, :]


def nll(world: TabularWorld, i: int, theta_i, counts_i) -> float:
    """``-sum log sigma(r(x, y_w) - r(x, y_l))`` for objective ``i``."""
    r = world.features[i] @ np.asarray(theta_i, dtype=float)
    return float(-np.sum(counts_i * log_expit(_diff(r))))


def _lse(a):
    top = a.max(axis=-1, keepdims=True)
    return top[..., 0] + np.log(np.exp(a - top).sum(axis=-1))


def _nll_all(world, theta, counts):
    r = rewards(world, theta)
    delta = _diff(r)
    value = -np.sum(counts * log_expit(delta))
    coef = -counts * expit(-delta)
    g_r = coef.sum(axis=-1) - coef.sum(axis=-2)
    grad = np.einsum("mxy,mxyd->md", g_r, world.features)
    return value, grad


def nll_grad(world: TabularWorld, theta, counts) -> np.ndarray:
    return _nll_all(world, np.asarray(theta, dtype=float), counts)[1]


def _linear_value_all(world, theta, d):
    r = rewards(world, theta)
    logits = np.log(world.pi_ref) + np.tensordot(d, r, axes=1) / world.beta
    lse = _lse(logits)
    pi = np.exp(logits - lse[:, None])
    value = world.beta * world.rho @ lse
    grad = d[:, None] * np.einsum("x,xy,mxyd->md", world.rho, pi, world.features)
    return value, grad


def linear_value_theta(world: TabularWorld, theta, d) -> float:
    """``max_pi J(r^theta, d, pi)`` in closed form."""
    return float(_linear_value_all(world, np.asarray(theta, dtype=float), _dvec(d))[0])


def linear_value_theta_grad(world: TabularWorld, theta, d) -> np.ndarray:
    return _linear_value_all(world, np.asarray(theta, dtype=float), _dvec(d))[1]


def _dvec(d) -> np.ndarray:
    d = np.asarray(d.d if isinstance(d, Direction) else d, dtype=float)
    if np.any(d < -1e-12):
        raise DomainError("direction must be nonnegative")
    return d


def fit_objective(world: TabularWorld, theta, counts, d, mode: str, eta: float):
    """Minimization form of each fit: mle ``L``, pessimistic ``J + eta L``, optimistic ``-J + eta L``.

    Returns ``(value, gradient)``.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}")
    L, gL = _nll_all(world, theta, counts)
    if mode == "mle":
        return L, gL
    J, gJ = _linear_value_all(world, theta, _dvec(d))
    sign = 1.0 if mode == "pessimistic" else -1.0
    return sign * J + eta * L, sign * gJ + eta * gL


def fit_hessian(world: TabularWorld, theta, counts, d, mode: str, eta: float) -> np.ndarray:
    """Hessian of ``fit_objective`` as an ``(m*dim, m*dim)`` matrix."""
    F = world.features
    m, _, _, D = F.shape
    delta = _diff(rewards(world, theta))
    w = counts * expit(delta) * expit(-delta)
    lap = -(w + np.swapaxes(w, -1, -2))
    idx = np.arange(F.shape[2])
    lap[..., idx, idx] += w.sum(axis=-1) + w.sum(axis=-2)
    blocks = np.einsum("mxad,mxab,mxbe->mde", F, lap, F)
    H = np.zeros((m, D, m, D))
    for i in range(m):
        H[i, :, i, :] = blocks[i]
    if mode != "mle":
        H *= eta
        dv = _dvec(d)
        r = rewards(world, theta)
        logits = np.log(world.pi_ref) + np.tensordot(dv, r, axes=1) / world.beta
        pi = np.exp(logits - _lse(logits)[:, None])
        psi = np.einsum("i,ixyd->xyid", dv, F)
        mean = np.einsum("xy,xyid->xid", pi, psi)
        cov = (np.einsum("x,xy,xyid,xyje->idje", world.rho, pi, psi, psi)
               - np.einsum("x,xid,xje->idje", world.rho, mean, mean))
        H += (1.0 if mode == "pessimistic" else -1.0) * cov / world.beta
    return H.reshape(m * D, m * D)


# ---------------------------------------------------------------- constraint set

class ThetaSet:
    """Product over objectives of ``{theta_i : a_i.theta_i = C_i, |theta_i| <= B'}``.

    Each factor is a disk inside a hyperplane, so the projection is exact:
    drop onto the hyperplane, then pull into the disk around its center.
    """

    def __init__(self, world: TabularWorld, B_prime: float | None = None):
        self.B_prime = world.B + 1.0 if B_prime is None else float(B_prime)
        self.a = np.einsum("x,xy,mxyd->md", world.rho, world.pi_base, world.features)
        self.a2 = np.sum(self.a ** 2, axis=1)
        self.C = np.asarray(world.C, dtype=float)
        self.center = self.C[:, None] * self.a / self.a2[:, None]
        r2 = self.B_prime ** 2 - np.sum(self.center ** 2, axis=1)
        if np.any(r2 < 0):
            raise DomainError("B' too small: the constraint set is empty")
        self.radius = np.sqrt(r2)
        # orthonormal basis of each hyperplane's direction space
        self.basis = []
        for a in self.a:
            q, _ = np.linalg.qr(np.column_stack([a, np.eye(a.size)]))
            self.basis.append(q[:, 1:a.size])

    def project(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        h = theta - ((np.sum(self.a * theta, axis=1) - self.C) / self.a2)[:, None] * self.a
        off = h - self.center
        norm = np.linalg.norm(off, axis=1)
        scale = np.where(norm > self.radius, self.radius / np.maximum(norm, 1e-300), 1.0)
        return self.center + scale[:, None] * off

    def violation(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        eq = np.abs(np.sum(self.a * theta, axis=1) - self.C).max()
        ball = np.maximum(np.linalg.norm(theta, axis=1) - self.B_prime, 0).max()
        return float(max(eq, ball))

    def tangent(self, theta, grad):
        """Basis of the feasible tangent space at ``theta`` and the sphere multipliers.

        A disk counts as active when ``theta`` sits on its rim and the gradient
        pushes outward; its rim direction is then removed from the basis.
        """
        m, D = theta.shape
        cols, mult = [], []
        for i in range(m):
            U = self.basis[i]
            z = U.T @ (theta[i] - self.center[i])
            gz = U.T @ grad[i]
            nz = np.linalg.norm(z)
            if nz >= self.radius[i] * (1 - 1e-9) and gz @ z < 0:
                q, _ = np.linalg.qr(np.column_stack([z, np.eye(z.size)]))
                U = U @ q[:, 1:z.size]
                mu = -(gz @ z) / nz ** 2
            else:
                mu = 0.0
            block = np.zeros((m * D, U.shape[1]))
            block[i * D:(i + 1) * D] = U
            cols.append(block)
            mult.append(np.full(U.shape[1], mu))
        return np.hstack(cols), np.concatenate(mult)


def _newton_direction(H, Bm, mult, g):
    Hr = Bm.T @ H @ Bm + np.diag(mult)
    gr = Bm.T @ g.reshape(-1)
    if Hr.size == 0:
        return None
    vals, vecs = np.linalg.eigh(Hr)
    floor = 1e-10 * max(1.0, float(np.abs(vals).max()))
    vals = np.maximum(np.abs(vals), floor)
    return Bm @ (vecs @ ((vecs.T @ -gr) / vals))


def projected_gradient(fun, proj, x0, *, tol: float = TOL_FIT, max_iter: int = MAX_FIT_ITERS,
                       history: list | None = None, hess=None, tangent=None):
    """Projected gradient with Barzilai-Borwein trial steps and Armijo backtracking.

    ``fun(x)`` returns ``(value, grad)``.  When ``hess`` and ``tangent`` are
    given, each iteration first tries a Newton step inside the feasible tangent
    space (eigenvalues flipped and floored) and falls back to the gradient step
    if the Armijo test rejects it.  Stops when the projected-gradient mapping
    ``|x - P(x - g)|`` is below ``tol``.  Returns ``(x, value, residual, iters)``.
    """
    x = proj(x0)
    f, g = fun(x)
    step = 1.0 / max(1.0, float(np.linalg.norm(g)))
    residual = float(np.linalg.norm(x - proj(x - g)))
    if history is not None:
        history.append(f)
    for it in range(1, max_iter + 1):
        if residual <= tol:
            return x, f, residual, it - 1
        accepted = False
        if hess is not None:
            Bm, mult = tangent(x, g)
            direction = _newton_direction(hess(x), Bm, mult, g)
            t = 1.0
            while direction is not None and t >= 1.0 / 1024:
                x_new = proj(x + t * direction.reshape(x.shape))
                dx = x_new - x
                slope = float(np.sum(g * dx))
                if slope < 0:
                    f_new, g_new = fun(x_new)
                    if f_new <= f + ARMIJO_C * slope:
                        accepted = True
                        break
                t *= 0.5
        if not accepted:
            predicted = None
            while True:
                x_new = proj(x - step * g)
                dx = x_new - x
                f_new, g_new = fun(x_new)
                slope = float(np.sum(g * dx))
                if predicted is None:
                    predicted = -slope
                if f_new <= f + ARMIJO_C * slope:
                    break
                step *= 0.5
                if step < 1e-30 or -slope <= 1e-300:
                    # no decrease is resolvable in floating point: accept only when
                    # the first trial already promised less than the rounding of f
                    if predicted <= 1e3 * np.finfo(float).eps * max(1.0, abs(f)):
                        return x, f, residual, it
                    raise SolverError("line search failed", residual)
        dg = g_new - g
        sy = float(np.sum(dx * dg))
        step = float(np.sum(dx * dx)) / sy if sy > 0 else step * 2.0
        step = min(max(step, 1e-12), 1e12)
        x, f, g = x_new, f_new, g_new
        residual = float(np.linalg.norm(x - proj(x - g)))
        if history is not None:
            history.append(f)
    if residual <= tol:
        return x, f, residual, max_iter
    raise SolverError("projected gradient did not converge", residual)


def fit_theta(world: TabularWorld, counts, d=None, mode: str = "mle", eta: float = 1.0, *,
              B_prime: float | None = None, theta0=None, tol: float = TOL_FIT,
              max_iter: int = MAX_FIT_ITERS, history: list | None = None,
              newton: bool = True, theta_set: ThetaSet | None = None) -> RewardFit:
    """Fit reward parameters over the constraint set for the requested principle.

    The objective is divided by ``fit_scale`` before optimizing, which leaves
    the minimizer unchanged; ``residual`` is measured on the scaled objective.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}")
    if mode != "mle" and d is None:
        raise DomainError("pessimistic and optimistic fits need a direction")
    if not eta > 0:
        raise DomainError("eta must be positive")
    counts = np.asarray(counts, dtype=float)
    dvec = None if d is None else _dvec(d)
    tset = ThetaSet(world, B_prime) if theta_set is None else theta_set
    start = np.zeros((world.m, world.dim)) if theta0 is None else np.asarray(theta0, dtype=float)
    scale = fit_scale(counts, mode, eta)

    def scaled(th):
        value, grad = fit_objective(world, th, counts, dvec, mode, eta)
        return value / scale, grad / scale

    def hess(th):
        return fit_hessian(world, th, counts, dvec, mode, eta) / scale

    theta, value, residual, iters = projected_gradient(
        scaled, tset.project, start, tol=tol, max_iter=max_iter, history=history,
        hess=hess if newton else None, tangent=tset.tangent)
    return RewardFit(theta, mode, float(eta), residual, iters, float(value * scale))


def fit_scale(counts, mode: str, eta: float) -> float:
    """Positive constant dividing the fit objective so the residual is per-datum."""
    n = float(np.sum(counts))
    if mode == "mle":
        return max(1.0, n)
    return 1.0 + eta * n


def reward_free_objective(world: TabularWorld, theta, counts, d, eta: float) -> float:
    """``beta E_{rho, base} log pi^theta - eta sum_i l(D_i, theta_i)`` with log-ratio losses.

    ``pi^theta`` is the geometric combination of the per-objective policies
    weighted by ``d`` (times ``pi_ref``), and ``l`` is the log-likelihood written
    through ``beta log(pi_{theta_i}/pi_ref)`` differences.
    """
    theta = np.asarray(theta, dtype=float)
    dvec = _dvec(d)
    r = rewards(world, theta)
    log_ref = np.log(world.pi_ref)
    log_pi_i = log_ref + r / world.beta
    log_pi_i = log_pi_i - logsumexp(log_pi_i, axis=-1, keepdims=True)
    log_pi = log_ref + np.tensordot(dvec, log_pi_i - log_ref, axes=1)
    log_pi = log_pi - logsumexp(log_pi, axis=-1, keepdims=True)
    first = world.beta * np.einsum("x,xy,xy->", world.rho, world.pi_base, log_pi)
    implicit = world.beta * (log_pi_i - log_ref)
    ell = np.sum(np.asarray(counts) * log_expit(_diff(implicit)))
    return float(first - eta * ell)


# ---------------------------------------------------------------- importance weights

def pair_gaps(world: TabularWorld, theta) -> np.ndarray:
    """``|r_i(x, w) - r_i(x, l)|`` arranged as ``(X, Y, Y, m)``."""
    return np.moveaxis(np.abs(_diff(rewards(world, theta))), 0, -1)


def index_loglik(alpha, index_counts_n, gaps) -> float:
    """Softmax index log-likelihood for one group (sum of log-probabilities)."""
    logits = np.asarray(alpha) * gaps
    return float(np.sum(index_counts_n * (logits - logsumexp(logits, axis=-1, keepdims=True))))


def index_loglik_grad(alpha, index_counts_n, gaps) -> np.ndarray:
    probs = softmax(np.asarray(alpha) * gaps, axis=-1)
    n = index_counts_n.sum(axis=-1, keepdims=True)
    return np.sum((index_counts_n - n * probs) * gaps, axis=(0, 1, 2))


def fit_alpha(index_counts_n, gaps, *, alpha0=None, prev_mean=None, t: int = 1,
              tol: float = TOL_ALPHA, max_iter: int = MAX_FIT_ITERS) -> WeightEstimate:
    """Maximize the index log-likelihood over the simplex.

    Each round takes the better of an exponentiated-gradient step and a Newton
    step restricted to the simplex's tangent space (kept strictly inside by a
    fraction-to-boundary rule).  The objective is divided by the number of data
    so that ``tol`` bounds the per-datum Frank-Wolfe gap.
    """
    counts = np.asarray(index_counts_n, dtype=float)
    m = counts.shape[-1]
    total = counts.sum()
    if total <= 0:
        raise DomainError("weight estimation needs at least one datum")
    mask = counts.sum(axis=-1) > 0
    C, G = counts[mask], np.asarray(gaps, dtype=float)[mask]
    n = C.sum(axis=-1)

    def evaluate(a):
        logits = a * G
        lse = _lse(logits)
        value = (np.sum(C * logits) - n @ lse) / total
        probs = np.exp(logits - lse[:, None])
        grad = np.sum((C - n[:, None] * probs) * G, axis=0) / total
        return value, grad, probs

    def newton_step(a, g, probs):
        # concave objective: H = -sum_k n_k diag(G_k) (diag(p_k) - p_k p_k^T) diag(G_k)
        Gp = G * probs
        H = -(np.einsum("k,ki,ki->i", n, G, Gp)[:, None] * np.eye(m)
              - np.einsum("k,ki,kj->ij", n, Gp, Gp)) / total
        Q = np.eye(m) - 1.0 / m
        A = Q @ (-H) @ Q + np.ones((m, m)) / m
        ridge = 1e-12 * max(1.0, float(np.abs(H).max()))
        try:
            step = Q @ np.linalg.solve(A + ridge * np.eye(m), Q @ g)
        except np.linalg.LinAlgError:
            return None
        neg = step < 0
        s_max = float(np.min(a[neg] / -step[neg])) * 0.99 if np.any(neg) else np.inf
        return step, min(1.0, s_max)

    alpha = np.full(m, 1.0 / m) if alpha0 is None else np.asarray(alpha0, dtype=float).copy()
    alpha = np.clip(alpha, 1e-12, None)
    alpha /= alpha.sum()
    f, g, probs = evaluate(alpha)
    step = 1.0
    it = 0
    gap = float(g.max() - alpha @ g)
    while gap > tol:
        it += 1
        if it > max_iter:
            raise SolverError("weight estimation did not converge", gap)
        best = None
        nt = newton_step(alpha, g, probs)
        if nt is not None:
            direction, s = nt
            while s > 1e-12:
                cand = np.maximum(alpha + s * direction, 1e-300)
                cand /= cand.sum()
                out = evaluate(cand)
                if out[0] >= f + ARMIJO_C * s * float(g @ direction) - 1e-15:
                    best = (cand, *out)
                    break
                s *= 0.5
        while True:
            z = np.log(alpha) + step * (g - g.max())
            cand = np.exp(z - z.max())
            cand /= cand.sum()
            cand = np.maximum(cand, 1e-300)
            out = evaluate(cand)
            if out[0] >= f - 1e-15:
                break
            step *= 0.5
            if step < 1e-20:
                if best is None:
                    raise SolverError("weight estimation line search failed", gap)
                out = None
                break
        if out is not None:
            step *= 2.0
            if best is None or out[0] > best[1]:
                best = (cand, *out)
        stalled = best[1] <= f and float(best[2].max() - best[0] @ best[2]) >= gap
        alpha, f, g, probs = best
        gap = float(g.max() - alpha @ g)
        if stalled and gap <= 1e3 * np.finfo(float).eps * max(1.0, abs(f)):
            break
    alpha = alpha / alpha.sum()
    if prev_mean is None or t <= 1:
        mean = alpha.copy()
    else:
        mean = ((t - 1) * np.asarray(prev_mean, dtype=float) + alpha) / t
    return WeightEstimate(alpha, float(f * total), mean, gap, it)


# ---------------------------------------------------------------- one MOP call

def annotate(world: TabularWorld, pi, group_alphas, rng: np.random.Generator,
             theta=None) -> list[PreferenceDatum]:
    """One labelled comparison per group: pair from ``pi``, index from the group's weights, BT label."""
    r = rewards(world, theta)
    data = []
    for n, alpha_n in enumerate(group_alphas):
        x = int(rng.choice(world.n_prompts, p=world.rho))
        y1, y2 = sample_pair(pi, x, rng)
        probs = index_probs(alpha_n, r[:, x, y1] - r[:, x, y2])
        idx = int(rng.choice(world.m, p=probs))
        y_w, y_l = bt_sample(r[idx, x], y1, y2, rng)
        data.append(PreferenceDatum(x, y_w, y_l, n, idx))
    return data


def mop_step(world: TabularWorld, pair_counts, dbar, eta: float, mode: str, *,
             theta=None, theta0=None, B_prime: float | None = None,
             group_alphas=None, rng: np.random.Generator | None = None,
             tol: float = TOL_FIT, theta_set: ThetaSet | None = None):
    """Fit, execute the linear-aggregation policy, and optionally collect one datum per group.

    ``theta`` bypasses the fit (oracle rewards).  Data is generated only when
    both ``group_alphas`` (the hidden weights of each group) and ``rng`` are given.
    """
    d = _dvec(dbar)
    if abs(d.sum() - 1.0) > 1e-9:
        raise DomainError("MOP needs an l1-normalized direction")
    if theta is not None:
        fit = RewardFit(np.asarray(theta, dtype=float), "oracle", float(eta), 0.0)
    else:
        fit = fit_theta(world, pair_counts, d, mode, eta, B_prime=B_prime, theta0=theta0,
                        tol=tol, theta_set=theta_set)
    pi = optimal_policy_linear(world, d, rewards(world, fit.theta))
    data = []
    if group_alphas is not None and rng is not None:
        data = annotate(world, pi, group_alphas, rng)
    return fit, pi, data
