"""Command-line harness: ``mopo <subcommand> ...``.

Every subcommand except ``project`` reads a JSON experiment config checked
against ``config_schema.json``.  Scalar flags override config fields.  Outputs
go to ``--out``, else the config's ``output_dir``, else ``$MOPO_OUTPUT_DIR``,
else ``./mopo-out``.

Exit codes: 0 success, 2 config error, 3 solver failure (every seed failed).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import drivers, learning, oracle
from .errors import DomainError, SolverError
from .geometry import (AggregationSpec, MultiGroupSpec, assess, as_spec_list, project,
                       project_intersection, spec_from_json)
from .world import TabularWorld, make_world, per_objective_policies, read_jsonl

ENV_OUTPUT = "MOPO_OUTPUT_DIR"
DEFAULT_OUTPUT = "mopo-out"
FORMAT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(Exception):
    pass


def _schema() -> dict:
    return json.loads(resources.files("mopo").joinpath("config_schema.json").read_text())


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    return cfg


def load_config(path, overrides: dict | None = None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, field = key.rpartition(".")
        (cfg.setdefault(section, {}) if section else cfg)[field] = value
    return validate_config(cfg)


def output_dir(cfg: dict, flag: str | None = None) -> Path:
    out = Path(flag or cfg.get("output_dir") or os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def world_for(cfg: dict, seed: int) -> TabularWorld:
    """The configured world; generated worlds use ``world.seed`` if set, else the run seed."""
    w = dict(cfg.get("world", {}))
    if "path" in w:
        extra = set(w) - {"path"}
        if extra:
            raise ConfigError(f"world.path cannot be combined with {sorted(extra)}")
        try:
            with open(w["path"]) as fh:
                return TabularWorld.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read world {w['path']}: {exc}") from None
    return make_world(w.pop("seed", seed), **w)


def targets_for(cfg: dict, goal: str):
    if goal == "malfare":
        if "mg" not in cfg:
            raise ConfigError("malfare goal needs an 'mg' block")
        return MultiGroupSpec.from_json(cfg["mg"])
    if "targets" in cfg:
        return [AggregationSpec.from_json(s) for s in cfg["targets"]]
    if "mg" in cfg:
        return list(MultiGroupSpec.from_json(cfg["mg"]).groups)
    raise ConfigError("config needs 'targets' or 'mg'")


def _check_dims(world, targets):
    if any(s.m != world.m for s in as_spec_list(targets)):
        raise ConfigError(f"targets have a different number of objectives than the world (m={world.m})")


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------- gen-world

def cmd_gen_world(cfg: dict, out: Path, workers: int = 1) -> int:
    if "path" in cfg.get("world", {}):
        raise ConfigError("gen-world needs generator parameters, not world.path")
    for seed in cfg["seeds"]:
        world = world_for(cfg, seed)
        _dump(world.to_json(), out / f"world-{seed}.json")
    return EXIT_OK


# ---------------------------------------------------------------- run

def _run_seed(job):
    cfg, seed, out = job
    r = cfg.get("run", {})
    goal = r.get("goal", "consensus")
    try:
        world = world_for(cfg, seed)
        targets = targets_for(cfg, goal)
        _check_dims(world, targets)
        rc = drivers.RunConfig(r.get("T", 100), goal, r.get("mode", "offline"), r.get("eta"), seed,
                               r.get("M", 1000), r.get("B_prime"), r.get("init", "origin"))
    except (ConfigError, DomainError) as exc:
        return {"seed": seed, "config_error": str(exc)}
    csv_path = Path(out) / f"trace-{seed}.csv"
    try:
        if rc.mode == "offline":
            rng = np.random.default_rng(seed)
            if "data" in r:
                counts, _ = learning.counts_from_data(world, read_jsonl(r["data"]))
            else:
                counts = learning.offline_dataset(world, rc.M, rng)
            theta = world.theta_star if r.get("true_rewards") else None
            trace = drivers.run_offline(world, counts, targets, rc, theta=theta, csv_path=csv_path)
        elif rc.mode == "online":
            trace = drivers.run_online(world, targets, rc, csv_path=csv_path)
        else:
            trace = drivers.run_practical(world, per_objective_policies(world), targets, rc,
                                          csv_path=csv_path)
        summary = trace.summary()
        if r.get("oracle"):
            solve = oracle.solve_malfare if goal == "malfare" else oracle.solve_consensus
            res = solve(world, targets)
            summary["oracle_value"] = res.value
            summary["gap"] = drivers.evaluate_gap(world, trace, res)
    except (SolverError, DomainError, FloatingPointError) as exc:
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}
    summary["seed"] = seed
    _dump(summary, Path(out) / f"summary-{seed}.json")
    return summary


def cmd_run(cfg: dict, out: Path, workers: int = 1) -> int:
    results = _map(_run_seed, [(cfg, s, str(out)) for s in cfg["seeds"]], workers)
    bad_cfg = [x for x in results if "config_error" in x]
    if bad_cfg:
        raise ConfigError(bad_cfg[0]["config_error"])
    ok = [x for x in results if "error" not in x]
    gaps = [x["gap"] for x in ok if "gap" in x]
    agg = {"version": FORMAT_VERSION, "seeds": cfg["seeds"],
           "D_tilde": {str(x["seed"]): x["D_tilde"] for x in ok},
           "errors": [x for x in results if "error" in x]}
    if gaps:
        agg["gap_mean"] = float(np.mean(gaps))
        agg["gap_max"] = float(np.max(gaps))
    _dump(agg, out / "summary.json")
    for e in agg["errors"]:
        print(f"seed {e['seed']} failed: {e['error']}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_SOLVER


# ---------------------------------------------------------------- compare

def _compare_seed(job):
    cfg, seed = job
    c = cfg.get("compare", {})
    world = world_for(cfg, seed)
    mm = oracle.solve_maxmin(world).pi_star
    policies = per_objective_policies(world)
    rows = []
    for alpha in c.get("alphas", drivers.ALPHA_GRID):
        spec = AggregationSpec(alpha, c.get("p", 0.5), c.get("c", 1.2))
        if spec.m != world.m:
            raise ConfigError(f"compare alpha {list(alpha)} does not match m={world.m}")
        vals = drivers.compare_methods(world, spec, T=c.get("T", 7), maxmin_policy=mm,
                                       policies=policies)
        rows.append((seed, tuple(alpha), vals))
    return rows


def cmd_compare(cfg: dict, out: Path, workers: int = 1) -> int:
    try:
        results = _map(_compare_seed, [(cfg, s) for s in cfg["seeds"]], workers)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    rows = [r for chunk in results for r in chunk]
    methods = drivers.COMPARE_METHODS
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "alpha", *methods])
        for seed, alpha, vals in rows:
            w.writerow([seed, "(" + ",".join(format(a, "g") for a in alpha) + ")",
                        *(format(vals[k], ".17g") for k in methods)])
    n = len(rows)
    wins = sum(v["mopo_practical"] <= v["mod"] for _, _, v in rows)
    ar_worst = sum(v["ar"] >= max(v.values()) for _, _, v in rows)
    _dump({"version": FORMAT_VERSION, "cells": n, "mopo_le_mod": wins / n,
           "ar_worst": ar_worst / n}, out / "compare-summary.json")
    return EXIT_OK


# ---------------------------------------------------------------- oracle

def _oracle_seed(job):
    cfg, seed = job
    o = cfg.get("oracle", {})
    goal = o.get("goal", "consensus")
    world = world_for(cfg, seed)
    budget, restarts = o.get("budget", 500), o.get("restarts")
    try:
        if goal == "maxmin":
            res = oracle.solve_maxmin(world, budget, **({"restarts": restarts} if restarts else {}))
        else:
            targets = targets_for(cfg, goal)
            _check_dims(world, targets)
            solve = oracle.solve_malfare if goal == "malfare" else oracle.solve_consensus
            res = solve(world, targets, budget, restarts=restarts or 32, grid=o.get("grid", False))
    except SolverError as exc:
        return seed, None, str(exc)
    return seed, res.to_json(), None


def cmd_oracle(cfg: dict, out: Path, workers: int = 1) -> int:
    try:
        results = _map(_oracle_seed, [(cfg, s) for s in cfg["seeds"]], workers)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    ok = 0
    for seed, res, err in results:
        if err:
            print(f"seed {seed} failed: {err}", file=sys.stderr)
            continue
        ok += 1
        res["version"] = FORMAT_VERSION
        _dump(res, out / f"oracle-{seed}.json")
    return EXIT_OK if ok else EXIT_SOLVER


# ---------------------------------------------------------------- estimate-weights

def _weights_seed(job):
    cfg, seed = job
    wcfg = cfg.get("weights", {})
    world = world_for(cfg, seed)
    specs = as_spec_list(targets_for(cfg, "consensus"))
    _check_dims(world, specs)
    if "data" in wcfg:
        data = read_jsonl(wcfg["data"])
    else:
        rng = np.random.default_rng(seed)
        alphas = [s.alpha for s in specs]
        data = [d for _ in range(wcfg.get("M", 1000))
                for d in learning.annotate(world, world.pi_ref, alphas, rng)]
    n_groups = max(len(specs), 1 + max((d.group for d in data), default=0))
    pc, ic = learning.counts_from_data(world, data, n_groups)
    try:
        if wcfg.get("theta", "mle") == "true":
            theta = world.theta_star
        else:
            theta = learning.fit_theta(world, pc, mode="mle").theta
        gaps = learning.pair_gaps(world, theta)
        est = [learning.fit_alpha(ic[n], gaps).to_json() if ic[n].sum() > 0 else None
               for n in range(n_groups)]
    except SolverError as exc:
        return seed, None, str(exc)
    return seed, {"version": FORMAT_VERSION, "seed": seed, "world_hash": world.hash(),
                  "n_data": len(data), "groups": est}, None


def cmd_estimate_weights(cfg: dict, out: Path, workers: int = 1) -> int:
    try:
        results = _map(_weights_seed, [(cfg, s) for s in cfg["seeds"]], workers)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    ok = 0
    for seed, res, err in results:
        if err:
            print(f"seed {seed} failed: {err}", file=sys.stderr)
            continue
        ok += 1
        _dump(res, out / f"weights-{seed}.json")
    return EXIT_OK if ok else EXIT_SOLVER


# ---------------------------------------------------------------- project

def cmd_project(spec_arg: str, point) -> dict:
    """Project ``point`` onto the set described by ``spec_arg`` (inline JSON or a file path)."""
    try:
        text = Path(spec_arg).read_text() if os.path.exists(spec_arg) else spec_arg
        spec = spec_from_json(json.loads(text))
    except (json.JSONDecodeError, OSError, DomainError) as exc:
        raise ConfigError(f"malformed spec: {exc}") from None
    v = np.asarray(point, dtype=float)
    if v.shape != (spec.m,):
        raise ConfigError(f"point needs {spec.m} coordinates, got {v.size}")
    if isinstance(spec, MultiGroupSpec):
        value, _, d = assess("consensus", list(spec.groups), v)
        proj = project_intersection(list(spec.groups), v)
    else:
        value, _, d = assess("consensus", [spec], v)
        proj = project(spec, v)
    return {"version": FORMAT_VERSION, "point": v.tolist(), "projection": proj.tolist(),
            "distance": float(value), "direction": d.d.tolist(), "norm_kind": d.kind}


# ---------------------------------------------------------------- entry point

COMMANDS = {"gen-world": cmd_gen_world, "run": cmd_run, "compare": cmd_compare,
            "oracle": cmd_oracle, "estimate-weights": cmd_estimate_weights}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mopo", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="experiment config JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--workers", type=int, default=1, help="parallel seed workers")
        if name == "run":
            p.add_argument("--T", type=int)
            p.add_argument("--M", type=int)
            p.add_argument("--eta", type=float)
            p.add_argument("--mode", choices=drivers.RUN_MODES)
            p.add_argument("--goal", choices=drivers.GOALS)
    p = sub.add_parser("project")
    p.add_argument("spec", help="spec JSON, inline or a file path")
    p.add_argument("point", type=float, nargs="+")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "project":
            print(json.dumps(cmd_project(args.spec, args.point), sort_keys=True))
            return EXIT_OK
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        overrides = {"seeds": args.seeds}
        if args.command == "run":
            overrides.update({f"run.{k}": getattr(args, k) for k in ("T", "M", "eta", "mode", "goal")})
        cfg = load_config(args.config, overrides)
        out = output_dir(cfg, args.out)
        return COMMANDS[args.command](cfg, out, args.workers)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
