"""Independent reference solvers used only by the tests."""
import itertools
import math

import numpy as np
from scipy.optimize import minimize_scalar

from mopo.geometry import NEG_INF


def _agg(alpha, p, z):
    z = np.asarray(z, dtype=float)
    if p == NEG_INF:
        return z[alpha > 0].min()
    if p == 0:
        return math.exp(sum(a * math.log(x) for a, x in zip(alpha, z) if a > 0)) if np.all(z[alpha > 0] > 0) else 0.0
    if p < 0 and np.any(z[alpha > 0] == 0):
        return 0.0
    return float(np.sum(alpha * z ** p)) ** (1.0 / p)


def in_set(alpha, p, c, z, tol=1e-12):
    z = np.asarray(z, dtype=float)
    return bool(np.all(z >= 0) and _agg(np.asarray(alpha), p, z) >= c - tol)


def box_projection(c, v):
    return np.maximum(np.asarray(v, dtype=float), c)


def halfspace_projection(alpha, c, v):
    """Enumerate active sets of ``z >= 0`` for ``min |z - v|^2 s.t. alpha.z >= c``."""
    alpha, v = np.asarray(alpha, float), np.asarray(v, float)
    m = v.size
    best, best_d = None, np.inf
    for k in range(m + 1):
        for zeros in itertools.combinations(range(m), k):
            free = np.array([i not in zeros for i in range(m)])
            for tight in (False, True):
                z = np.zeros(m)
                z[free] = v[free]
                if tight:
                    a = alpha[free]
                    if a @ a == 0:
                        continue
                    z[free] = v[free] + (c - a @ v[free]) / (a @ a) * a
                if np.all(z >= -1e-15) and alpha @ z >= c - 1e-12:
                    d = np.linalg.norm(z - v)
                    if d < best_d:
                        best, best_d = np.maximum(z, 0.0), d
    return best


def _other(alpha, p, c, t, i):
    """Boundary coordinate ``z_j`` given ``z_i = t`` (m = 2); nan where the line misses the boundary."""
    j = 1 - i
    ai, aj = alpha[i], alpha[j]
    t = np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        if p == 0:
            out = (c / t ** ai) ** (1.0 / aj)
            return np.where(t > 0, out, np.nan)
        rest = c ** p - ai * t ** p
        out = (rest / aj) ** (1.0 / p)
        if p > 0:
            return np.where(rest >= 0, out, np.nan)
        return np.where((t > 0) & (rest > 0), out, np.nan)


def grid_projection_2d(alpha, p, c, v, resolution=1e-4):
    """Nearest point of the m=2 target set by a dense boundary grid, then a local 1-D polish."""
    alpha, v = np.asarray(alpha, float), np.asarray(v, float)
    clamp = np.maximum(v, 0.0)
    if in_set(alpha, p, c, clamp):
        return clamp
    hi = max(c, float(np.max(np.abs(v)))) * 4 + 1
    ts = np.arange(resolution, hi, resolution)
    cands = []
    for i in (0, 1):
        zs = _other(alpha, p, c, ts, i)
        ok = np.isfinite(zs)
        if np.any(ok):
            pts = np.zeros((ok.sum(), 2))
            pts[:, i], pts[:, 1 - i] = ts[ok], zs[ok]
            d = np.linalg.norm(pts - v, axis=1)
            k = int(np.argmin(d))
            t0 = ts[ok][k]

            def point(t):
                pt = np.zeros(2)
                pt[i], pt[1 - i] = t, float(_other(alpha, p, c, t, i))
                return pt

            def f(t):
                d_t = np.linalg.norm(point(t) - v)
                return d_t if np.isfinite(d_t) else np.inf

            res = minimize_scalar(f, bounds=(max(t0 - 2 * resolution, 1e-300), t0 + 2 * resolution),
                                  method="bounded", options={"xatol": 1e-13})
            cands.append(point(res.x) if res.fun <= d[k] else pts[k])
        if p > 0:
            # axis ray {z_j = 0, z_i >= c / alpha_i^(1/p)}
            ray = np.zeros(2)
            ray[i] = max(v[i], c / alpha[i] ** (1.0 / p))
            cands.append(ray)
    return min(cands, key=lambda z: np.linalg.norm(z - v))


def cvxpy_projection(alpha, p, c, v):
    """Conic reference projection for any m."""
    import cvxpy as cp

    alpha, v = np.asarray(alpha, float), np.asarray(v, float)
    z = cp.Variable(v.size, nonneg=True)
    if p == NEG_INF:
        cons = [z >= c]
    elif p == 1:
        cons = [alpha @ z >= c]
    elif p == 0:
        cons = [alpha @ cp.log(z) >= math.log(c)]
    elif p > 0:
        cons = [alpha @ cp.power(z, p) >= c ** p]
    else:
        cons = [alpha @ cp.power(z, p) <= c ** p]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(z - v)), cons)
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(z.value)


def cvxpy_intersection_distance(specs, v):
    """Distance from ``v`` to an intersection of target sets by a conic solver."""
    import cvxpy as cp

    v = np.asarray(v, float)
    z = cp.Variable(v.size, nonneg=True)
    cons = []
    for s in specs:
        a, p, c = s.alpha, s.p, s.c
        if p == NEG_INF:
            cons += [z[i] >= c for i in range(v.size) if a[i] > 0]
        elif p == 1:
            cons.append(a @ z >= c)
        elif p == 0:
            cons.append(a @ cp.log(z) >= math.log(c))
        elif p > 0:
            cons.append(a @ cp.power(z, p) >= c ** p)
        else:
            cons.append(a @ cp.power(z, p) <= c ** p)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(z - v)), cons)
    prob.solve(solver=cp.CLARABEL)
    return math.sqrt(prob.value)
