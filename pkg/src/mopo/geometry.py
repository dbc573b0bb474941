"""Weighted power-mean target sets, Euclidean projections and MOPO directions.

A target set is ``W = {z >= 0 : M_p(z; alpha) >= c}`` where ``M_p`` is the
weighted power mean.  Every projection routine accepts a single point of shape
``(m,)`` or a batch of shape ``(n, m)`` and returns the same shape.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError

NEG_INF = float("-inf")

TOL_PROJ_EXACT = 1e-9
TOL_PROJ_GENERAL = 1e-7
TOL_INSIDE = 1e-8
TOL_CONTAIN = 1e-10
MAX_ITER = 10_000
MAX_DYKSTRA_SWEEPS = 5_000


def _parse_p(p) -> float:
    if isinstance(p, str):
        if p.strip().lower() in ("neg_inf", "-inf"):
            return NEG_INF
        raise DomainError(f"unknown exponent {p!r}")
    p = float(p)
    if math.isnan(p) or p > 1:
        raise DomainError(f"exponent must be <= 1 or neg_inf, got {p}")
    return p


@dataclass(frozen=True, eq=False)
class AggregationSpec:
    """One group's aggregation rule: weights ``alpha``, exponent ``p``, threshold ``c``."""

    alpha: np.ndarray
    p: float
    c: float

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if alpha.size == 0 or np.any(~np.isfinite(alpha)) or np.any(alpha < 0):
            raise DomainError("alpha must be a nonempty nonnegative vector")
        if abs(alpha.sum() - 1.0) > 1e-12:
            raise DomainError(f"alpha must sum to 1, got {alpha.sum()!r}")
        alpha.setflags(write=False)
        c = float(self.c)
        if not (c >= 0 and math.isfinite(c)):
            raise DomainError(f"threshold c must be finite and >= 0, got {c}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "p", _parse_p(self.p))
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.alpha.size

    def with_alpha(self, alpha) -> AggregationSpec:
        return AggregationSpec(alpha, self.p, self.c)

    def __eq__(self, other):
        if not isinstance(other, AggregationSpec):
            return NotImplemented
        return (np.array_equal(self.alpha, other.alpha) and self.p == other.p
                and self.c == other.c)

    __hash__ = None

    def __repr__(self):
        p = "neg_inf" if self.p == NEG_INF else self.p
        return f"AggregationSpec(alpha={self.alpha.tolist()}, p={p}, c={self.c})"

    def to_json(self) -> dict:
        return {"alpha": self.alpha.tolist(),
                "p": "neg_inf" if self.p == NEG_INF else self.p,
                "c": self.c}

    @classmethod
    def from_json(cls, obj: dict) -> AggregationSpec:
        if not isinstance(obj, dict) or set(obj) != {"alpha", "p", "c"}:
            raise DomainError("aggregation spec needs exactly the keys alpha, p, c")
        return cls(obj["alpha"], obj["p"], obj["c"])


@dataclass(frozen=True, eq=False)
class MultiGroupSpec:
    """Several groups' target sets plus malfare weights ``zeta`` and exponent ``q``."""

    groups: tuple
    zeta: np.ndarray
    q: int = 1

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups or not all(isinstance(g, AggregationSpec) for g in groups):
            raise DomainError("groups must be a nonempty sequence of AggregationSpec")
        if len({g.m for g in groups}) != 1:
            raise DomainError("all groups must share the number of objectives")
        zeta = np.array(self.zeta, dtype=float).reshape(-1)
        if zeta.size != len(groups) or np.any(zeta <= 0) or abs(zeta.sum() - 1) > 1e-12:
            raise DomainError("zeta must be positive, one per group, summing to 1")
        zeta.setflags(write=False)
        if isinstance(self.q, bool) or int(self.q) != self.q or self.q < 1:
            raise DomainError(f"q must be a positive integer, got {self.q!r}")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "q", int(self.q))

    @property
    def m(self) -> int:
        return self.groups[0].m

    def __len__(self):
        return len(self.groups)

    def __eq__(self, other):
        if not isinstance(other, MultiGroupSpec):
            return NotImplemented
        return (self.groups == other.groups and np.array_equal(self.zeta, other.zeta)
                and self.q == other.q)

    __hash__ = None

    def to_json(self) -> dict:
        return {"groups": [g.to_json() for g in self.groups],
                "zeta": self.zeta.tolist(), "q": self.q}

    @classmethod
    def from_json(cls, obj: dict) -> MultiGroupSpec:
        if not isinstance(obj, dict) or set(obj) != {"groups", "zeta", "q"}:
            raise DomainError("multi-group spec needs exactly the keys groups, zeta, q")
        return cls(tuple(AggregationSpec.from_json(g) for g in obj["groups"]),
                   obj["zeta"], obj["q"])


def spec_from_json(obj: dict):
    """Parse either an aggregation spec or a multi-group spec."""
    if isinstance(obj, dict) and "groups" in obj:
        return MultiGroupSpec.from_json(obj)
    return AggregationSpec.from_json(obj)


def as_spec_list(target) -> list[AggregationSpec]:
    if isinstance(target, AggregationSpec):
        return [target]
    if isinstance(target, MultiGroupSpec):
        return list(target.groups)
    return list(target)


@dataclass(frozen=True, eq=False)
class Direction:
    """A nonnegative direction in objective space.

    ``kind`` is one of ``"euclidean-unit"``, ``"l1-normalized"`` or ``"zero"``;
    ``raw`` keeps the vector before normalization.
    """

    d: np.ndarray
    kind: str
    raw: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def l1(self) -> Direction:
        if self.is_zero:
            return self
        return Direction(self.d / np.abs(self.d).sum(), "l1-normalized", self.raw)

    def unit(self) -> Direction:
        if self.is_zero:
            return self
        return Direction(self.d / np.linalg.norm(self.d), "euclidean-unit", self.raw)


@dataclass(frozen=True)
class BoundedSetDistance:
    value: float
    B1: float
    n_samples: int


def _out(x, single: bool):
    if single:
        x = x[0]
        return float(x) if np.ndim(x) == 0 else x
    return x


def aggregate(spec: AggregationSpec, z):
    """Weighted power mean of ``z`` (last axis) with the spec's weights and exponent."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("aggregate is defined for nonnegative vectors only")
    pos = spec.alpha > 0
    a, zp, p = spec.alpha[pos], z[..., pos], spec.p
    if p == NEG_INF:
        out = zp.min(axis=-1)
    elif p == 0:
        with np.errstate(divide="ignore"):
            out = np.exp(np.sum(a * np.log(zp), axis=-1))
    elif p < 0:
        hit_zero = np.any(zp == 0, axis=-1)
        with np.errstate(over="ignore"):
            s = np.sum(a * np.where(zp > 0, zp, 1.0) ** p, axis=-1)
        out = np.where(hit_zero, 0.0, s ** (1.0 / p))
    else:
        out = np.sum(a * zp ** p, axis=-1) ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


def contains(spec: AggregationSpec, z, tol: float = TOL_CONTAIN):
    z = np.asarray(z, dtype=float)
    nonneg = np.all(z >= 0, axis=-1)
    agg = aggregate(spec, np.maximum(z, 0.0))
    out = nonneg & (agg >= spec.c - tol)
    return bool(out) if np.ndim(out) == 0 else out


def _project_box(alpha, c, V):
    return np.where(alpha > 0, np.maximum(V, c), np.maximum(V, 0.0))


def _project_linear(alpha, c, V):
    """Exact projection onto {z >= 0 : alpha.z >= c} by scanning the breakpoints."""
    out = np.maximum(V, 0.0)
    pos = alpha > 0
    a, Vp = alpha[pos], V[:, pos]
    bp = np.maximum(-Vp / a, 0.0)
    cand = np.concatenate([np.zeros((len(V), 1)), bp], axis=1)
    f = np.maximum(Vp[:, None, :] + cand[:, :, None] * a, 0.0) @ a - c
    need = f[:, 0] < 0
    if np.any(need):
        masked = np.where(f <= 0, cand, -np.inf)
        k = np.argmax(masked, axis=1)
        rows = np.arange(len(V))
        lam0, f0 = cand[rows, k], f[rows, k]
        active = bp <= lam0[:, None]
        slope = np.sum(np.where(active, a * a, 0.0), axis=1)
        lam = lam0 - f0 / np.where(slope > 0, slope, 1.0)
        zp = np.maximum(Vp + lam[:, None] * a, 0.0)
        sub = out[:, pos]
        sub[need] = zp[need]
        out[:, pos] = sub
    return out


def _coord_root(K, V, p):
    """Solve ``z - K z**(p-1) = V`` for ``z > 0`` elementwise (``K > 0``, ``p < 1``)."""
    if p == 0:
        disc = np.sqrt(V * V + 4.0 * K)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(V >= 0, 0.5 * (V + disc), 2.0 * K / (disc - V))
    s = K ** (1.0 / (2.0 - p))
    # the root is bracketed below by zl; the map is concave and increasing, so
    # Newton started from the left approaches monotonically
    z = np.maximum(np.minimum(s, (K / (s + np.abs(V))) ** (1.0 / (1.0 - p))), V).ravel()
    Kf, Vf = np.broadcast_to(K, V.shape).ravel(), V.ravel()
    act = np.arange(z.size)
    for _ in range(200):
        zk, kk = z[act], Kf[act]
        F = zk - kk * zk ** (p - 1.0) - Vf[act]
        step = -F / (1.0 + kk * (1.0 - p) * zk ** (p - 2.0))
        z_new = np.where(zk + step > 0, zk + step, 0.5 * zk)
        z[act] = z_new
        act = act[np.abs(z_new - zk) > 4e-16 * z_new]
        if act.size == 0:
            break
    return z.reshape(V.shape)


def _project_power(alpha, p, c, V, max_iter):
    """Projection onto a general power-mean set for rows whose clamp lies outside it.

    The KKT system is ``z_i - v_i = lam * alpha_i * z_i**(p-1)``; for fixed lam
    each coordinate is an increasing 1-D root, and ``log M_p(z(lam))`` is
    increasing in lam, so a safeguarded Newton iteration on ``log lam`` finds the
    multiplier that puts ``z`` on the boundary.
    """
    pos = alpha > 0
    a, Vp = alpha[pos], V[:, pos]
    logc = math.log(c)

    def evaluate(mu, rows):
        lam = np.exp(mu)
        K = lam[:, None] * a
        Z = _coord_root(K, Vp[rows], p)
        with np.errstate(over="ignore"):
            dZ = a * Z ** (p - 1.0) / (1.0 + K * (1.0 - p) * Z ** (p - 2.0))
        if p == 0:
            w = a / Z
            psi = np.sum(a * np.log(Z), axis=1) - logc
        else:
            S = np.sum(a * Z ** p, axis=1)
            w = a * Z ** (p - 1.0) / S[:, None]
            psi = np.log(S) / p - logc
        return psi, lam * np.sum(w * dZ, axis=1), Z

    n = len(V)
    # start from the multiplier of the linearized constraint at the clamp
    gap = np.maximum(c - np.maximum(Vp, 0.0) @ a, 1e-12)
    mu = np.clip(np.log(gap * c ** (1.0 - p) / float(a @ a)), -700.0, 700.0)
    rows = np.arange(n)
    psi, dpsi, Z = evaluate(mu, rows)
    lo = np.where(psi < 0, mu, -np.inf)
    hi = np.where(psi > 0, mu, np.inf)
    lo, hi = np.where(psi == 0, mu, lo), np.where(psi == 0, mu, hi)
    miss = np.flatnonzero(~np.isfinite(lo) | ~np.isfinite(hi))
    for _ in range(400):
        if miss.size == 0:
            break
        up = ~np.isfinite(hi[miss])
        mu[miss] = np.clip(np.where(up, mu[miss] + 2.0, mu[miss] - 2.0), -700.0, 700.0)
        ps, dp, Zm = evaluate(mu[miss], miss)
        psi[miss], dpsi[miss], Z[miss] = ps, dp, Zm
        lo[miss] = np.where(ps <= 0, np.maximum(lo[miss], mu[miss]), lo[miss])
        hi[miss] = np.where(ps >= 0, np.minimum(hi[miss], mu[miss]), hi[miss])
        # still inside W at lam = e^-700: the exact point differs by far less than
        # a double can resolve (tiny weights on zero coordinates, mostly p = 0)
        floor = (mu[miss] <= -700.0) & (ps >= 0)
        lo[miss[floor]] = hi[miss[floor]] = mu[miss[floor]]
        psi[miss[floor]] = 0.0
        miss = miss[~np.isfinite(lo[miss]) | ~np.isfinite(hi[miss])]
    else:
        raise SolverError("could not bracket the projection multiplier")

    def done(idx):
        return (np.abs(psi[idx]) <= 1e-13) | (
            hi[idx] - lo[idx] <= 1e-15 * np.maximum(1.0, np.abs(mu[idx])))

    act = rows[~done(rows)]
    for _ in range(max_iter):
        if act.size == 0:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = mu[act] - psi[act] / dpsi[act]
        bad = ~np.isfinite(newton) | (newton <= lo[act]) | (newton >= hi[act])
        mu[act] = np.where(bad, 0.5 * (lo[act] + hi[act]), newton)
        ps, dp, Za = evaluate(mu[act], act)
        psi[act], dpsi[act], Z[act] = ps, dp, Za
        lo[act] = np.where(ps < 0, np.maximum(lo[act], mu[act]), lo[act])
        hi[act] = np.where(ps > 0, np.minimum(hi[act], mu[act]), hi[act])
        act = act[~done(act)]
    else:
        raise SolverError("projection multiplier did not converge",
                          float(np.max(np.abs(psi[act]))))
    out = np.maximum(V, 0.0)
    out[:, pos] = Z
    return out


def project(spec: AggregationSpec, v, *, max_iter: int = MAX_ITER):
    """Euclidean projection of ``v`` onto the spec's target set."""
    V = np.asarray(v, dtype=float)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    if V.shape[-1] != spec.m:
        raise DomainError(f"point has {V.shape[-1]} coordinates, spec has {spec.m}")
    out = V.copy()
    outside = ~np.atleast_1d(contains(spec, V))
    if not np.any(outside):
        return _out(out, single)
    W = V[outside]
    alpha, p, c = spec.alpha, spec.p, spec.c
    if c == 0:
        res = np.maximum(W, 0.0)
    elif p == NEG_INF:
        res = _project_box(alpha, c, W)
    elif p == 1:
        res = _project_linear(alpha, c, W)
    else:
        res = np.maximum(W, 0.0)
        need = ~np.atleast_1d(contains(spec, res))
        if np.any(need):
            res[need] = _project_power(alpha, p, c, W[need], max_iter)
    out[outside] = res
    return _out(out, single)


def distance(spec: AggregationSpec, v, **kw):
    V = np.asarray(v, dtype=float)
    d = np.linalg.norm(V - project(spec, V, **kw), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def _default_tol(specs) -> float:
    if all(s.p in (1.0, NEG_INF) for s in specs):
        return TOL_PROJ_EXACT
    return TOL_PROJ_GENERAL


def _mean_grad_hess(spec, z):
    """Value, gradient and Hessian of the weighted power mean at ``z`` with ``z > 0`` on the support."""
    a, p = spec.alpha, spec.p
    pos = a > 0
    M = float(aggregate(spec, z))
    if p == 1:
        return M, a.copy(), np.zeros((z.size, z.size))
    g = np.zeros_like(z)
    h = np.zeros_like(z)
    # a coordinate pinned at 0 gives infinite slopes for p < 1; callers reject non-finite steps
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g[pos] = a[pos] * z[pos] ** (p - 1.0)
        h[pos] = a[pos] * z[pos] ** (p - 2.0)
        grad = M ** (1.0 - p) * g
        H = (1.0 - p) * (M ** (1.0 - 2.0 * p) * np.outer(g, g) - M ** (1.0 - p) * np.diag(h))
    return M, grad, H


def _kkt_newton(specs, act, v, x, lower, fixed, scale):
    """Newton on ``z - v = sum lam_k grad M_k(z)``, ``M_k(z) = c_k`` over the free coordinates."""
    m = v.size
    z = np.where(fixed, lower, np.maximum(x, 1e-300))
    free = np.flatnonzero(~fixed)
    nf, na = free.size, len(act)
    G = np.array([_mean_grad_hess(specs[k], z)[1] for k in act]).reshape(na, m)
    lam = np.maximum(np.linalg.lstsq(G[:, free].T, (z - v)[free], rcond=None)[0], 0.0) if na else np.zeros(0)
    for _ in range(100):
        parts = [_mean_grad_hess(specs[k], z) for k in act]
        G = np.array([g for _, g, _ in parts]).reshape(na, m)
        with np.errstate(invalid="ignore", over="ignore"):
            r = np.concatenate([(z - v - lam @ G)[free], [M - specs[k].c for (M, _, _), k in zip(parts, act)]])
        if not np.all(np.isfinite(r)):
            return None
        if not r.size or np.abs(r).max() <= 1e-14 * scale:
            return z, lam, G
        J = np.zeros((nf + na, nf + na))
        J[:nf, :nf] = np.eye(nf)
        for l, (_, _, H) in zip(lam, parts):
            J[:nf, :nf] -= l * H[np.ix_(free, free)]
        J[:nf, nf:] = -G[:, free].T
        J[nf:, :nf] = G[:, free]
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        dz = step[:nf]
        shrink = dz < 0
        t = min(1.0, 0.99 * float(np.min(z[free][shrink] / -dz[shrink]))) if np.any(shrink) else 1.0
        z[free] += t * dz
        lam = lam + t * step[nf:]
    return None


def _kkt_polish(specs, v, x):
    """Exact intersection projection from a Dykstra warm start, or ``None``.

    Candidate active sets are tried in turn; a candidate is accepted only if it
    passes a full KKT check (feasible, nonnegative multipliers, stationary),
    which certifies the projection because the problem is convex.
    """
    m = v.size
    lower = np.zeros(m)
    for s in specs:
        if s.p == NEG_INF:
            lower = np.where(s.alpha > 0, np.maximum(lower, s.c), lower)
    scale = 1.0 + float(np.abs(v).max())
    smooth = [k for k, s in enumerate(specs) if s.p != NEG_INF]
    near = [k for k in smooth
            if abs(aggregate(specs[k], np.maximum(x, 0.0)) - specs[k].c) <= 1e-6 * max(1.0, specs[k].c)]
    cands = [near]
    if len(smooth) <= 6:
        cands += [list(c) for r in range(len(smooth) + 1)
                  for c in itertools.combinations(smooth, r) if list(c) != near]
    for act, slack in itertools.product(cands, (1e-12, 1e-6 * scale, 1e-3 * scale)):
        fixed = x <= lower * (1 + 1e-7) + slack
        for _ in range(m + 1):
            res = _kkt_newton(specs, act, v, x, lower, fixed, scale)
            if res is None:
                break
            z, lam, G = res
            low = np.flatnonzero(~fixed & (z < lower - 1e-12))
            if not low.size:
                break
            fixed[low] = True
        if res is None:
            continue
        mu = z - v - lam @ G
        if np.any(lam < -1e-12) or np.any(mu[fixed] < -1e-10 * scale):
            continue
        z = np.maximum(z, lower)
        if all(contains(s, z, tol=1e-12 * max(1.0, s.c)) for s in specs):
            return z
    return None


def project_intersection(specs, v, *, tol: float | None = None,
                         max_sweeps: int = MAX_DYKSTRA_SWEEPS):
    """Projection onto the intersection of several target sets (Dykstra's method)."""
    specs = as_spec_list(specs)
    if len(specs) == 1:
        return project(specs[0], v)
    tol = _default_tol(specs) if tol is None else tol
    V = np.asarray(v, dtype=float)
    single = V.ndim == 1
    X = np.atleast_2d(V).copy()
    inside = np.ones(len(X), dtype=bool)
    for s in specs:
        inside &= np.atleast_1d(contains(s, X))
    if np.all(inside):
        return _out(X, single)
    x = X[~inside]
    incr = [np.zeros_like(x) for _ in specs]
    idx = np.flatnonzero(~inside)
    act = np.arange(len(x))
    for sweep in range(1, max_sweeps + 1):
        xa = x[act]
        x_prev = xa
        shift = np.zeros(len(act))
        for k, s in enumerate(specs):
            y = np.atleast_2d(project(s, xa + incr[k][act]))
            new_incr = xa + incr[k][act] - y
            shift = np.maximum(shift, np.linalg.norm(new_incr - incr[k][act], axis=1))
            incr[k][act] = new_incr
            xa = y
        x[act] = xa
        # the iterate can sit still for many sweeps while the increments keep moving
        calm = (np.linalg.norm(xa - x_prev, axis=1) <= 0.01 * tol) & (shift <= 0.01 * tol)
        if np.any(calm):
            resid = np.max([np.atleast_1d(distance(s, xa[calm])) for s in specs], axis=0)
            done = np.zeros(len(act), dtype=bool)
            done[np.flatnonzero(calm)[resid <= tol]] = True
            act = act[~done]
        if not len(act):
            break
        if sweep % 20 == 0:
            for j in act:
                z = _kkt_polish(specs, X[idx[j]], x[j])
                if z is not None:
                    x[j] = z
                    act = act[act != j]
            if not len(act):
                break
    else:
        resid = max(np.max(np.atleast_1d(distance(s, x[act]))) for s in specs)
        raise SolverError("Dykstra iteration did not converge", resid)
    X[idx] = x
    return _out(X, single)


def consensus_distance(specs, v):
    V = np.asarray(v, dtype=float)
    d = np.linalg.norm(V - project_intersection(specs, V), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def malfare_value(mg: MultiGroupSpec, v):
    """``(sum_n zeta_n d_n^{2q})^{1/(2q)}`` with ``d_n`` the distance to group n's set."""
    V = np.asarray(v, dtype=float)
    D = np.stack([np.asarray(distance(g, V)) for g in mg.groups], axis=-1)
    out = np.sum(mg.zeta * D ** (2 * mg.q), axis=-1) ** (1.0 / (2 * mg.q))
    return float(out) if np.ndim(out) == 0 else out


def _zero(m: int) -> Direction:
    return Direction(np.zeros(m), "zero", np.zeros(m))


def _consensus_from(v, target, tol_inside):
    diff = target - v
    dist = float(np.linalg.norm(diff))
    if dist < tol_inside:
        return _zero(v.size)
    return Direction(np.maximum(diff / dist, 0.0), "euclidean-unit", diff)


def _malfare_from(mg, v, group_points, tol_inside):
    q2 = 2 * mg.q
    dists, units = [], []
    for point in group_points:
        diff = point - v
        dist = float(np.linalg.norm(diff))
        dists.append(dist)
        units.append(np.maximum(diff / dist, 0.0) if dist >= tol_inside else np.zeros(v.size))
    dists = np.array(dists)
    if np.all(dists < tol_inside):
        return _zero(v.size)
    denom = np.sum(mg.zeta * dists ** q2) ** ((q2 - 1) / q2)
    weights = mg.zeta * dists ** (q2 - 1) / denom
    raw = weights @ np.array(units)
    return Direction(raw / raw.sum(), "l1-normalized", raw)


def direction_consensus(specs, v, *, tol_inside: float = TOL_INSIDE) -> Direction:
    """Unit vector from ``v`` toward its projection on the intersection of ``specs``."""
    v = np.asarray(v, dtype=float)
    return _consensus_from(v, project_intersection(specs, v), tol_inside)


def direction_malfare(mg: MultiGroupSpec, v, *, tol_inside: float = TOL_INSIDE) -> Direction:
    """Distance-weighted combination of the unit directions toward each group's set.

    Returns the l1-normalized direction; ``raw`` holds the unnormalized sum.
    """
    v = np.asarray(v, dtype=float)
    return _malfare_from(mg, v, [project(g, v) for g in mg.groups], tol_inside)


def assess(goal: str, targets, v, *, tol_inside: float = TOL_INSIDE):
    """Goal value, per-group distances and next direction at ``v``, projecting each set once.

    ``goal`` is ``"consensus"`` (value = distance to the intersection) or
    ``"malfare"`` (value = the malfare aggregate of group distances).
    """
    v = np.asarray(v, dtype=float)
    specs = as_spec_list(targets)
    points = [project(g, v) for g in specs]
    group = np.array([np.linalg.norm(p - v) for p in points])
    if goal == "malfare":
        mg = targets
        value = float(np.sum(mg.zeta * group ** (2 * mg.q)) ** (1.0 / (2 * mg.q)))
        return value, group, _malfare_from(mg, v, points, tol_inside)
    inter = points[0] if len(specs) == 1 else project_intersection(specs, v)
    return float(np.linalg.norm(inter - v)), group, _consensus_from(v, inter, tol_inside)


def restricted_set_distance(spec_a: AggregationSpec, spec_b: AggregationSpec, B1: float,
                            n_samples: int, seed: int) -> BoundedSetDistance:
    """Monte-Carlo lower bound on the box-restricted Hausdorff-type distance.

    Samples uniform points of ``[0, B1]^m`` plus their projections onto each set
    (the maximum of a convex distance sits on the boundary), keeps those inside
    the source set, and returns the largest distance to the other set.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    for src, dst in ((spec_a, spec_b), (spec_b, spec_a)):
        U = rng.uniform(0.0, B1, size=(n_samples, src.m))
        P = np.minimum(np.atleast_2d(project(src, U)), B1)
        X = np.concatenate([U, P])
        X = X[np.atleast_1d(contains(src, X))]
        if len(X):
            best = max(best, float(np.max(np.atleast_1d(distance(dst, X)))))
    return BoundedSetDistance(best, float(B1), int(n_samples))
