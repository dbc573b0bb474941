"""Tabular preference worlds with linear rewards and closed-form KL-regularized policies.

Policies are plain ``(X, Y)`` arrays with rows on the simplex.  Reward tables
are ``(m, X, Y)`` arrays.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .errors import DomainError
from .geometry import Direction


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularWorld:
    """Finite prompts and responses, per-objective features and true parameters.

    ``features`` has shape ``(m, X, Y, d)`` and ``theta_star`` shape ``(m, d)``.
    """

    features: np.ndarray
    theta_star: np.ndarray
    rho: np.ndarray
    pi_ref: np.ndarray
    pi_base: np.ndarray
    C: np.ndarray
    beta: float
    B: float

    def __post_init__(self):
        for name in ("features", "theta_star", "rho", "pi_ref", "pi_base", "C"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        m, X, Y, d = self.features.shape
        if self.theta_star.shape != (m, d):
            raise DomainError("theta_star must have shape (m, d)")
        if self.rho.shape != (X,) or np.any(self.rho < 0) or abs(self.rho.sum() - 1) > 1e-12:
            raise DomainError("rho must be a distribution over prompts")
        check_policy(self.pi_ref, (X, Y))
        if np.any(self.pi_ref <= 0):
            raise DomainError("pi_ref must be strictly positive")
        check_policy(self.pi_base, (X, Y))
        if self.C.shape != (m,):
            raise DomainError("C must have one entry per objective")
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "B", float(self.B))
        if np.any(np.linalg.norm(self.features, axis=-1) > 1 + 1e-12):
            raise DomainError("feature vectors must have norm <= 1")
        r = np.einsum("mxyd,md->mxy", self.features, self.theta_star)
        if r.min() < -1e-12 or r.max() > self.B + 1e-12:
            raise DomainError("true rewards must lie in [0, B]")
        if np.any(np.abs(np.einsum("x,xy,mxy->m", self.rho, self.pi_base, r) - self.C) > 1e-9):
            raise DomainError("C must equal the expected true reward under pi_base")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def n_prompts(self) -> int:
        return self.features.shape[1]

    @property
    def n_responses(self) -> int:
        return self.features.shape[2]

    @property
    def dim(self) -> int:
        return self.features.shape[3]

    def to_json(self) -> dict:
        return {
            "version": 1,
            "n_prompts": self.n_prompts, "n_responses": self.n_responses,
            "m": self.m, "dim": self.dim,
            "features": self.features.tolist(),
            "theta_star": self.theta_star.tolist(),
            "rho": self.rho.tolist(),
            "pi_ref": self.pi_ref.tolist(),
            "pi_base": self.pi_base.tolist(),
            "C": self.C.tolist(),
            "beta": self.beta, "B": self.B,
        }

    @classmethod
    def from_json(cls, obj: dict) -> TabularWorld:
        keys = ("features", "theta_star", "rho", "pi_ref", "pi_base", "C", "beta", "B")
        missing = [k for k in keys if k not in obj]
        if missing:
            raise DomainError(f"world JSON lacks keys {missing}")
        return cls(**{k: obj[k] for k in keys})

    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, TabularWorld):
            return NotImplemented
        return self.hash() == other.hash()

    __hash__ = None


def check_policy(pi, shape=None, tol: float = 1e-12) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if shape is not None and pi.shape != tuple(shape):
        raise DomainError(f"policy shape {pi.shape} != {tuple(shape)}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=-1) - 1) > tol):
        raise DomainError("policy rows must be nonnegative and sum to 1")
    return pi


def make_world(seed: int, n_prompts: int = 1, n_responses: int = 4, m: int = 2,
               dim: int = 4, B: float = 2.0, beta: float = 0.5) -> TabularWorld:
    """Seeded random world whose rewards lie in ``[0, B]`` by construction.

    Features are ``(1, u)/sqrt(2)`` with ``u`` uniform on the unit sphere and the
    true parameters are ``B (1, w)/sqrt(2)``, so ``r = B (1 + w.u) / 2``.
    """
    if dim < 2:
        raise DomainError("dim must be at least 2")
    rng = np.random.default_rng(seed)

    def sphere(*shape):
        g = rng.standard_normal((*shape, dim - 1))
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    u = sphere(m, n_prompts, n_responses)
    features = np.concatenate([np.ones((m, n_prompts, n_responses, 1)), u], axis=-1) / math.sqrt(2)
    w = sphere(m)
    theta = B * np.concatenate([np.ones((m, 1)), w], axis=-1) / math.sqrt(2)
    pi_ref = rng.uniform(0.5, 1.5, size=(n_prompts, n_responses))
    pi_ref /= pi_ref.sum(axis=1, keepdims=True)
    rho = rng.uniform(0.5, 1.5, size=n_prompts)
    rho /= rho.sum()
    r = np.einsum("mxyd,md->mxy", features, theta)
    C = np.einsum("x,xy,mxy->m", rho, pi_ref, r)
    return TabularWorld(features, theta, rho, pi_ref, pi_ref.copy(), C, beta, B)


def symmetric_world(n_responses: int = 4, B: float = 2.0, beta: float = 0.5) -> TabularWorld:
    """Two objectives that mirror each other: ``r_2(y) = r_1(Y-1-y)``, uniform reference."""
    Y = n_responses
    base = np.linspace(0.0, 1.0, Y)
    f1 = np.stack([np.full(Y, 1.0), 2 * base - 1], axis=-1) / math.sqrt(2)
    f2 = f1[::-1]
    features = np.stack([f1, f2])[:, None]
    theta = np.tile([B / math.sqrt(2), B / math.sqrt(2)], (2, 1))
    pi_ref = np.full((1, Y), 1.0 / Y)
    r = np.einsum("mxyd,md->mxy", features, theta)
    C = np.einsum("xy,mxy->m", pi_ref, r)
    return TabularWorld(features, theta, [1.0], pi_ref, pi_ref.copy(), C, beta, B)


def rewards(world: TabularWorld, theta=None) -> np.ndarray:
    """Reward tables ``(m, X, Y)`` for ``theta`` (defaults to the true parameters)."""
    theta = world.theta_star if theta is None else np.asarray(theta, dtype=float)
    return np.einsum("mxyd,md->mxy", world.features, theta)


def reward(world: TabularWorld, i: int, x: int, y: int, theta=None) -> float:
    th = world.theta_star[i] if theta is None else np.asarray(theta, dtype=float)[i]
    return float(world.features[i, x, y] @ th)


def bt_sample(r_row, y1: int, y2: int, rng: np.random.Generator) -> tuple[int, int]:
    """Bradley-Terry label for the pair under the reward row ``r_row`` (length Y)."""
    if rng.random() < expit(r_row[y1] - r_row[y2]):
        return y1, y2
    return y2, y1


def index_probs(alpha, gaps) -> np.ndarray:
    """Softmax over ``alpha_i * |gap_i|`` along the last axis."""
    return softmax(np.asarray(alpha) * np.abs(gaps), axis=-1)


def index_sample(world: TabularWorld, alpha, x: int, y_w: int, y_l: int,
                 rng: np.random.Generator, theta=None) -> int:
    """Draw which objective an annotator with weights ``alpha`` reports on."""
    r = rewards(world, theta)
    probs = index_probs(alpha, r[:, x, y_w] - r[:, x, y_l])
    return int(rng.choice(world.m, p=probs))


def sample_pair(pi, x: int, rng: np.random.Generator) -> tuple[int, int]:
    """Two distinct responses: ``y1 ~ pi``, then ``y2 ~ pi`` conditioned on ``y2 != y1``."""
    row = np.asarray(pi)[x]
    y1 = int(rng.choice(row.size, p=row))
    rest = row.copy()
    rest[y1] = 0.0
    if rest.sum() <= 0:
        rest = np.ones_like(row)
        rest[y1] = 0.0
    y2 = int(rng.choice(row.size, p=rest / rest.sum()))
    return y1, y2


def _weights(d) -> np.ndarray:
    d = np.asarray(d.d if isinstance(d, Direction) else d, dtype=float)
    if np.any(d < 0) or abs(d.sum() - 1) > 1e-9:
        raise DomainError("direction must lie on the simplex")
    return d


def optimal_policy_linear(world: TabularWorld, d, reward_tables=None) -> np.ndarray:
    """``pi(y|x) ∝ pi_ref(y|x) exp(sum_i d_i r_i(x,y) / beta)``."""
    r = rewards(world) if reward_tables is None else np.asarray(reward_tables, dtype=float)
    d = _weights(d)
    logits = np.log(world.pi_ref) + np.tensordot(d, r, axes=1) / world.beta
    return softmax(logits, axis=-1)


def per_objective_policies(world: TabularWorld, reward_tables=None) -> np.ndarray:
    """Stack of ``optimal_policy_linear(e_i)`` for every objective, shape ``(m, X, Y)``."""
    r = rewards(world) if reward_tables is None else np.asarray(reward_tables, dtype=float)
    return softmax(np.log(world.pi_ref) + r / world.beta, axis=-1)


def mod_combine(policies, d) -> np.ndarray:
    """Weighted geometric mixture ``pi ∝ prod_i pi_i^{d_i}``."""
    P = np.asarray(policies, dtype=float)
    if np.any(P <= 0):
        raise DomainError("MOD combination needs strictly positive policies")
    d = _weights(d)
    return softmax(np.tensordot(d, np.log(P), axes=1), axis=-1)


def kl_rows(pi, pi_ref) -> np.ndarray:
    """Per-prompt ``KL(pi(.|x) || pi_ref(.|x))``."""
    pi, pi_ref = np.asarray(pi, dtype=float), np.asarray(pi_ref, dtype=float)
    if np.any((pi > 0) & (pi_ref <= 0)):
        raise DomainError("policy puts mass where the reference has none")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pi > 0, pi * (np.log(pi) - np.log(pi_ref)), 0.0)
    return terms.sum(axis=-1)


def kl(world: TabularWorld, pi) -> float:
    return float(world.rho @ kl_rows(pi, world.pi_ref))


def expected_reward_vector(world: TabularWorld, pi, reward_tables=None) -> np.ndarray:
    """``S_i = E_{rho, pi}[r_i] - beta E_rho KL(pi || pi_ref)``, by exact summation."""
    r = rewards(world) if reward_tables is None else np.asarray(reward_tables, dtype=float)
    pi = check_policy(pi, world.pi_ref.shape, tol=1e-9)
    penalty = world.beta * kl(world, pi)
    return np.einsum("x,xy,mxy->m", world.rho, pi, r) - penalty


def reward_free_value(world: TabularWorld, theta, pi, pi_theta=None) -> np.ndarray:
    """Reward vector of ``pi`` written with log-ratios of the per-objective policies only.

    ``V_i = C_i - beta E_base log(pi^{theta_i}/pi_ref) + beta E_pi log(pi^{theta_i}/pi)``.
    Equals ``expected_reward_vector(world, pi, rewards(world, theta))`` whenever
    every ``theta_i`` satisfies the baseline constraint.
    """
    pi = np.asarray(pi, dtype=float)
    if pi_theta is None:
        pi_theta = per_objective_policies(world, rewards(world, theta))
    pi_theta = np.asarray(pi_theta, dtype=float)
    if np.any(pi <= 0) or np.any(pi_theta <= 0):
        raise DomainError("reward-free value needs strictly positive policies")
    log_ratio_ref = np.log(pi_theta) - np.log(world.pi_ref)
    log_ratio_pi = np.log(pi_theta) - np.log(pi)
    base_term = np.einsum("x,xy,mxy->m", world.rho, world.pi_base, log_ratio_ref)
    pi_term = np.einsum("x,xy,mxy->m", world.rho, pi, log_ratio_pi)
    return world.C - world.beta * base_term + world.beta * pi_term


def linear_value(world: TabularWorld, d, reward_tables=None) -> float:
    """``max_pi E_pi[d.r] - beta KL`` in closed form: ``beta E_rho log sum_y pi_ref exp(d.r/beta)``."""
    r = rewards(world) if reward_tables is None else np.asarray(reward_tables, dtype=float)
    d = np.asarray(d.d if isinstance(d, Direction) else d, dtype=float)
    z = logsumexp(np.log(world.pi_ref) + np.tensordot(d, r, axes=1) / world.beta, axis=-1)
    return float(world.beta * world.rho @ z)


def linear_objective(world: TabularWorld, d, pi, reward_tables=None) -> float:
    r = rewards(world) if reward_tables is None else np.asarray(reward_tables, dtype=float)
    d = np.asarray(d.d if isinstance(d, Direction) else d, dtype=float)
    return float(np.einsum("x,xy,xy->", world.rho, pi, np.tensordot(d, r, axes=1))
                 - world.beta * kl(world, pi))


def measure_gap(world: TabularWorld, pi_star) -> float:
    """``min_i E_{x, y1~pi*, y2~pi_ref} |r_i(x,y1) - r_i(x,y2)|`` (diagnostic)."""
    r = rewards(world)
    diff = np.abs(r[:, :, :, None] - r[:, :, None, :])
    per = np.einsum("x,xa,xb,mxab->m", world.rho, np.asarray(pi_star), world.pi_ref, diff)
    return float(per.min())


def tv(p, q) -> float:
    """Largest per-prompt total-variation distance between two policies."""
    return float(np.max(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)))


@dataclass(frozen=True)
class PreferenceDatum:
    x: int
    y_w: int
    y_l: int
    group: int = 0
    index: int = 0

    def __post_init__(self):
        if self.y_w == self.y_l:
            raise DomainError("winner and loser must differ")

    def to_json(self) -> dict:
        return {"x": self.x, "y_w": self.y_w, "y_l": self.y_l,
                "group": self.group, "index": self.index}

    @classmethod
    def from_json(cls, obj: dict) -> PreferenceDatum:
        return cls(int(obj["x"]), int(obj["y_w"]), int(obj["y_l"]),
                   int(obj.get("group", 0)), int(obj.get("index", 0)))


def write_jsonl(data, path) -> None:
    with open(path, "w") as fh:
        for datum in data:
            fh.write(json.dumps(datum.to_json(), sort_keys=True) + "\n")


def read_jsonl(path) -> list[PreferenceDatum]:
    with open(path) as fh:
        return [PreferenceDatum.from_json(json.loads(line)) for line in fh if line.strip()]
