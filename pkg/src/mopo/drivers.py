"""MOPO iteration drivers: offline, online with weight estimation, and the practical variant."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import (AggregationSpec, Direction, MultiGroupSpec, aggregate, as_spec_list, assess,
                       consensus_distance, direction_consensus, direction_malfare,
                       malfare_value)
from .learning import (ThetaSet, add_data, empty_index_counts, empty_pair_counts,
                       fit_alpha, fit_theta, mop_step, pair_gaps)
from .world import (TabularWorld, check_policy, expected_reward_vector, mod_combine,
                    per_objective_policies, reward_free_value, rewards)

GOALS = ("consensus", "malfare")
ALPHA_GRID = ((0.1, 0.9), (0.3, 0.7), (0.5, 0.5), (0.7, 0.3), (0.9, 0.1))
COMPARE_METHODS = ("mopo_practical", "mod", "ar", "maxmin")
RUN_MODES = ("offline", "online", "practical")
CSV_VERSION = 1


@dataclass
class RunConfig:
    T: int
    goal: str = "consensus"
    mode: str = "offline"
    eta: float | None = None
    seed: int = 0
    M: int = 1000
    B_prime: float | None = None
    init: str = "origin"

    def __post_init__(self):
        if isinstance(self.T, bool) or int(self.T) != self.T or self.T < 1:
            raise DomainError("T must be a positive integer")
        if self.goal not in GOALS:
            raise DomainError(f"goal must be one of {GOALS}")
        if self.mode not in RUN_MODES:
            raise DomainError(f"mode must be one of {RUN_MODES}")
        if self.M < 1:
            raise DomainError("M must be >= 1")
        if self.eta is not None and not self.eta > 0:
            raise DomainError("eta must be positive")
        if self.init not in ("origin", "uniform"):
            raise DomainError("init must be 'origin' or 'uniform'")


@dataclass
class IterationRecord:
    t: int
    d: np.ndarray
    V: np.ndarray
    V_bar: np.ndarray
    dist: float
    group_dist: np.ndarray
    alpha_err: np.ndarray | None = None
    alpha: list | None = None


@dataclass
class RunTrace:
    mode: str
    goal: str
    world_hash: str
    records: list = field(default_factory=list)
    pi_tilde: np.ndarray | None = None
    S_tilde: np.ndarray | None = None
    D_tilde: float = float("nan")
    config: dict = field(default_factory=dict)

    @property
    def directions(self) -> np.ndarray:
        return np.array([r.d for r in self.records])

    @property
    def dists(self) -> np.ndarray:
        return np.array([r.dist for r in self.records])

    def summary(self) -> dict:
        return {"version": CSV_VERSION, "mode": self.mode, "goal": self.goal,
                "world_hash": self.world_hash, "T": len(self.records),
                "S_tilde": None if self.S_tilde is None else self.S_tilde.tolist(),
                "D_tilde": self.D_tilde, "config": self.config}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class TraceWriter:
    """Writes one CSV row per iteration and flushes immediately."""

    def __init__(self, path, m: int, n_groups: int, with_alpha: bool):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.with_alpha = with_alpha
        self.writer.writerow(trace_columns(m, n_groups, with_alpha))
        self.fh.flush()

    def write(self, rec: IterationRecord) -> None:
        self.writer.writerow(_row(rec, self.with_alpha))
        self.fh.flush()

    def close(self):
        self.fh.close()


def trace_columns(m: int, n_groups: int, with_alpha: bool) -> list[str]:
    cols = ["t", "dist_mean_to_W"] + [f"dist_group_{n}" for n in range(n_groups)]
    if with_alpha:
        cols += [f"alpha_err_inf_{n}" for n in range(n_groups)]
    return cols + [f"d_{i}" for i in range(m)] + [f"vbar_{i}" for i in range(m)]


def _row(rec: IterationRecord, with_alpha: bool) -> list[str]:
    row = [str(rec.t), _fmt(rec.dist)] + [_fmt(v) for v in rec.group_dist]
    if with_alpha:
        row += [_fmt(v) for v in rec.alpha_err]
    return row + [_fmt(v) for v in rec.d] + [_fmt(v) for v in rec.V_bar]


def write_trace_csv(trace: RunTrace, path) -> None:
    with_alpha = trace.mode == "online"
    recs = trace.records
    n_groups = len(recs[0].group_dist) if recs else 0
    m = len(recs[0].d) if recs else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_columns(m, n_groups, with_alpha))
        for rec in recs:
            w.writerow(_row(rec, with_alpha))


def write_summary_json(trace: RunTrace, path, extra: dict | None = None) -> None:
    out = trace.summary()
    if extra:
        out.update(extra)
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- helpers

def _goal_targets(goal: str, targets):
    if goal == "malfare":
        if not isinstance(targets, MultiGroupSpec):
            if isinstance(targets, AggregationSpec):
                targets = MultiGroupSpec((targets,), [1.0], 1)
            else:
                raise DomainError("malfare goal needs a MultiGroupSpec")
        return targets
    return as_spec_list(targets)


def _with_alphas(goal, targets, alphas):
    specs = [g.with_alpha(a) for g, a in zip(as_spec_list(targets), alphas)]
    if goal == "malfare":
        return MultiGroupSpec(tuple(specs), targets.zeta, targets.q)
    return specs


def goal_direction(goal: str, targets, v) -> Direction:
    if goal == "malfare":
        return direction_malfare(targets, v)
    return direction_consensus(targets, v)


def goal_value(goal: str, targets, v) -> float:
    """Distance of ``v`` to the intersection, or the malfare value of ``v``."""
    if goal == "malfare":
        return malfare_value(targets, v)
    return consensus_distance(targets, v)


def policy_value(world: TabularWorld, goal: str, targets, pi) -> float:
    return goal_value(goal, targets, expected_reward_vector(world, pi))


def _initial_direction(cfg: RunConfig, goal, targets, m: int) -> np.ndarray:
    uniform = np.full(m, 1.0 / m)
    if cfg.init == "uniform":
        return uniform
    d = goal_direction(goal, targets, np.zeros(m))
    return uniform if d.is_zero else d.l1().d


def _finish(trace, world, goal, targets, pi_tilde):
    trace.pi_tilde = pi_tilde
    trace.S_tilde = expected_reward_vector(world, pi_tilde)
    trace.D_tilde = float(goal_value(goal, targets, trace.S_tilde))
    return trace


# ---------------------------------------------------------------- drivers

def run_offline(world: TabularWorld, pair_counts, targets, cfg: RunConfig, *,
                theta=None, csv_path=None) -> RunTrace:
    """Pessimistic MOPO on a fixed dataset; ``theta`` injects known reward parameters."""
    goal = cfg.goal
    targets = _goal_targets(goal, targets)
    m = world.m
    pair_counts = np.zeros((m, world.n_prompts, world.n_responses, world.n_responses)) \
        if pair_counts is None else np.asarray(pair_counts, dtype=float)
    if cfg.eta is not None:
        eta = cfg.eta
    else:
        M = max(1.0, float(pair_counts.sum(axis=(1, 2, 3)).min()))
        eta = 1.0 / math.sqrt(M)
    trace = RunTrace("offline", goal, world.hash(), config=asdict(cfg))
    writer = TraceWriter(csv_path, m, len(as_spec_list(targets)), False) if csv_path else None
    dbar = _initial_direction(cfg, goal, targets, m)
    V_sum = np.zeros(m)
    pi_sum = np.zeros((world.n_prompts, world.n_responses))
    theta_prev = None
    tset = ThetaSet(world, cfg.B_prime)
    try:
        for t in range(1, cfg.T + 1):
            fit, pi, _ = mop_step(world, pair_counts, dbar, eta, "pessimistic",
                                  theta=theta, theta0=theta_prev, theta_set=tset)
            theta_prev = fit.theta
            pi_theta = per_objective_policies(world, rewards(world, fit.theta))
            V = reward_free_value(world, fit.theta, pi, pi_theta)
            V_sum += V
            pi_sum += pi
            V_bar = V_sum / t
            value, group, d_next = assess(goal, targets, V_bar)
            rec = IterationRecord(t, dbar.copy(), V, V_bar, value, group)
            trace.records.append(rec)
            if writer:
                writer.write(rec)
            if not d_next.is_zero:
                dbar = d_next.l1().d
    finally:
        if writer:
            writer.close()
    return _finish(trace, world, goal, targets, pi_sum / cfg.T)


def run_online(world: TabularWorld, targets, cfg: RunConfig, *, csv_path=None) -> RunTrace:
    """Optimistic MOPO that collects one datum per group per round and learns each group's weights.

    The ``alpha`` stored in ``targets`` is the hidden ground truth used only to
    simulate annotators and to score the estimates.
    """
    goal = cfg.goal
    targets = _goal_targets(goal, targets)
    specs = as_spec_list(targets)
    N, m = len(specs), world.m
    true_alpha = [s.alpha for s in specs]
    rng = np.random.default_rng(cfg.seed)
    eta = cfg.eta if cfg.eta is not None else 1.0 / math.sqrt(cfg.T)
    pair_counts = empty_pair_counts(world)
    index_counts = empty_index_counts(world, N)
    uniform = np.full(m, 1.0 / m)
    alpha_mean = [uniform.copy() for _ in range(N)]
    alpha_hat = [uniform.copy() for _ in range(N)]
    trace = RunTrace("online", goal, world.hash(), config=asdict(cfg))
    writer = TraceWriter(csv_path, m, N, True) if csv_path else None
    dbar = _initial_direction(cfg, goal, _with_alphas(goal, targets, alpha_mean), m)
    V_sum = np.zeros(m)
    pi_sum = np.zeros((world.n_prompts, world.n_responses))
    theta_tilde = theta_prev = None
    tset = ThetaSet(world, cfg.B_prime)
    try:
        for t in range(1, cfg.T + 1):
            if pair_counts.sum() > 0:
                theta_tilde = fit_theta(world, pair_counts, mode="mle", theta0=theta_tilde,
                                        theta_set=tset).theta
                gaps = pair_gaps(world, theta_tilde)
                for n in range(N):
                    if index_counts[n].sum() > 0:
                        est = fit_alpha(index_counts[n], gaps, alpha0=alpha_hat[n])
                        alpha_hat[n] = est.alpha_hat
            if t > 1:
                for n in range(N):
                    alpha_mean[n] = ((t - 1) * alpha_mean[n] + alpha_hat[n]) / t
            current = _with_alphas(goal, targets, alpha_mean)
            fit, pi, data = mop_step(world, pair_counts, dbar, eta, "optimistic",
                                     theta0=theta_prev, theta_set=tset,
                                     group_alphas=true_alpha, rng=rng)
            theta_prev = fit.theta
            add_data(pair_counts, index_counts, data)
            pi_theta = per_objective_policies(world, rewards(world, fit.theta))
            V = reward_free_value(world, fit.theta, pi, pi_theta)
            V_sum += V
            pi_sum += pi
            V_bar = V_sum / t
            err = np.array([np.max(np.abs(a - b)) for a, b in zip(alpha_mean, true_alpha)])
            value, group, d_next = assess(goal, current, V_bar)
            rec = IterationRecord(t, dbar.copy(), V, V_bar, value, group, err,
                                  [a.copy() for a in alpha_mean])
            trace.records.append(rec)
            if writer:
                writer.write(rec)
            if not d_next.is_zero:
                dbar = d_next.l1().d
    finally:
        if writer:
            writer.close()
    return _finish(trace, world, goal, targets, pi_sum / cfg.T)


def run_practical(world: TabularWorld, policies, targets, cfg: RunConfig, *,
                  csv_path=None) -> RunTrace:
    """Training-free MOPO: MOD combinations steered by averaged projection directions.

    The returned policy is the MOD combination at the final averaged direction.
    """
    goal = cfg.goal
    targets = _goal_targets(goal, targets)
    m = world.m
    policies = np.asarray(policies, dtype=float)
    trace = RunTrace("practical", goal, world.hash(), config=asdict(cfg))
    writer = TraceWriter(csv_path, m, len(as_spec_list(targets)), False) if csv_path else None
    dbar = np.full(m, 1.0 / m)
    d_sum = np.zeros(m)
    V_sum = np.zeros(m)
    try:
        for t in range(1, cfg.T + 1):
            pi = mod_combine(policies, dbar)
            V = expected_reward_vector(world, pi)
            V_sum += V
            value, group, d = assess(goal, targets, V)
            d_sum += dbar if d.is_zero else d.l1().d
            rec = IterationRecord(t, dbar.copy(), V, V_sum / t, value, group)
            trace.records.append(rec)
            if writer:
                writer.write(rec)
            dbar = d_sum / t
    finally:
        if writer:
            writer.close()
    trace.config["final_direction"] = dbar.tolist()
    return _finish(trace, world, goal, targets, mod_combine(policies, dbar))


def evaluate_gap(world: TabularWorld, trace: RunTrace, oracle_result) -> float:
    """``D(pi_tilde) - D(pi*)`` for the trace's goal; both must come from the same world."""
    h = world.hash()
    if trace.world_hash != h or oracle_result.world_hash != h:
        raise DomainError("trace, oracle and world do not share a world hash")
    return float(trace.D_tilde - oracle_result.value)


# ---------------------------------------------------------------- baselines

def ar_policy(world: TabularWorld, spec: AggregationSpec) -> np.ndarray:
    """KL-regularized optimum for the aggregated clamped reward ``agg(max(r, 0))``."""
    r = np.maximum(rewards(world), 0.0)
    z = aggregate(spec, np.moveaxis(r, 0, -1))
    logits = np.log(world.pi_ref) + z / world.beta
    logits -= logits.max(axis=1, keepdims=True)
    pi = np.exp(logits)
    return pi / pi.sum(axis=1, keepdims=True)


def compare_methods(world: TabularWorld, spec: AggregationSpec, *, T: int = 7,
                    maxmin_policy=None, policies=None) -> dict:
    """Distance of ``S(pi)`` to the target set for each baseline policy."""
    if policies is None:
        policies = per_objective_policies(world)
    out = {}
    trace = run_practical(world, policies, [spec], RunConfig(T, mode="practical"))
    out["mopo_practical"] = trace.D_tilde
    out["mod"] = policy_value(world, "consensus", [spec], mod_combine(policies, spec.alpha))
    out["ar"] = policy_value(world, "consensus", [spec], ar_policy(world, spec))
    if maxmin_policy is not None:
        out["maxmin"] = policy_value(world, "consensus", [spec], check_policy(maxmin_policy))
    return out
