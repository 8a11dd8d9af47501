"""Command-line interface.

Subcommands cover the full workflow: `check` a model's structural
assumptions, `solve` it on a belief grid, `export-sets` the stopping
regions, `train-spsa` a simulation-tuned policy, `simulate` and `compare`
policies, and `fit` a chain to an event log. Every output file embeds the
sha256 of the scenario it came from and the seed that produced it, and no
output contains timestamps, so reruns are byte-identical.

Model files may carry an optional "simulation" block with default horizon,
runs, grid resolution, periodic-baseline period, and seed; flags override
it. Names of bundled scenarios (eq16, eq16_ex2, eq16_ex3, periscope_eq24)
are accepted wherever a model path is.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import ValidationError
from .dp import BeliefGrid, ValueTable, solve, stopping_sets
from .ingest import EventLog, best_fit, bic_scan, bin_events, one_step_cdf_values
from .model import Model, load_model, model_to_dict, save_model
from .policy import (
    PeriodicPolicy,
    RepeatedSingleStopPolicy,
    SoftmaxPolicy,
    TablePolicy,
    ThresholdPolicy,
    heuristic_policy,
    load_policy,
    periodic_policy,
    policy_to_dict,
)
from .sim import default_horizon, evaluate
from .spsa import SpsaConfig, train_multistart
from .structure import check_assumptions


@dataclass(frozen=True)
class Scenario:
    """A model plus the run defaults its file carries."""

    path: Path
    model: Model
    sha256: str
    grid: int | None = None
    horizon: int | None = None
    runs: int | None = None
    period: int | None = None
    seed: int | None = None


def _resolve_model_path(token: str) -> Path:
    p = Path(token)
    if p.exists():
        return p
    name = token if token.endswith(".json") else token + ".json"
    bundled = resources.files("multistop") / "scenarios" / name
    if bundled.is_file():
        return Path(str(bundled))
    raise ValidationError(f"model file not found: {token}")


def load_scenario(token: str) -> Scenario:
    path = _resolve_model_path(token)
    raw = path.read_bytes()
    model = load_model(path)
    block = {}
    if path.suffix == ".json":
        block = json.loads(raw.decode()).get("simulation", {}) or {}
    return Scenario(
        path=path,
        model=model,
        sha256=hashlib.sha256(raw).hexdigest(),
        grid=block.get("grid"),
        horizon=block.get("horizon"),
        runs=block.get("runs"),
        period=block.get("period"),
        seed=block.get("seed"),
    )


def _pick(flag_value, scenario_value, fallback):
    if flag_value is not None:
        return flag_value
    if scenario_value is not None:
        return scenario_value
    return fallback


def _meta(scenario: Scenario, seed) -> dict:
    return {
        "tool": f"multistop {__version__}",
        "scenario": scenario.path.name,
        "scenario_sha256": scenario.sha256,
        "seed": int(seed),
    }


def _write_json(out: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _open_csv(out: str | None):
    if out:
        return open(out, "w", newline="")
    return sys.stdout


def _grid_for(scenario: Scenario, flag) -> BeliefGrid | None:
    resolution = _pick(flag, scenario.grid, None)
    if resolution is None:
        return None
    return BeliefGrid(scenario.model.S, int(resolution))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_check(args) -> int:
    scenario = load_scenario(args.model)
    report = check_assumptions(scenario.model)
    doc = _meta(scenario, _pick(args.seed, scenario.seed, 0))
    doc["assumptions"] = report.to_dict()
    doc["all_pass"] = report.all_pass
    _write_json(args.out, doc)
    return 0


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.model)
    grid = _grid_for(scenario, args.grid)
    table = solve(scenario.model, grid=grid, tol=args.tol, max_iter=args.max_iter)
    doc = _meta(scenario, _pick(args.seed, scenario.seed, 0))
    doc["iterations"] = table.iterations
    doc["residual"] = table.residual
    doc["value_at_initial_belief"] = [
        table.value_at(scenario.model.pi0, l) for l in range(1, scenario.model.L + 1)
    ]
    doc["table"] = table.to_dict()
    _write_json(args.out, doc)
    return 0


def _cmd_export_sets(args) -> int:
    scenario = load_scenario(args.model)
    if args.value:
        loaded = json.loads(Path(args.value).read_text())
        table = ValueTable.from_dict(loaded["table"])
    else:
        table = solve(scenario.model, grid=_grid_for(scenario, args.grid))
    sets = stopping_sets(table)
    seed = int(_pick(args.seed, scenario.seed, 0))
    fh = _open_csv(args.out)
    try:
        fh.write(f"# scenario_sha256={scenario.sha256} seed={seed}\n")
        writer = csv.writer(fh)
        S = table.grid.points.shape[1]
        writer.writerow([f"pi_{i + 1}" for i in range(S)] + ["l", "action"])
        for l in range(1, sets.shape[0] + 1):
            for gidx, point in enumerate(table.grid.points):
                writer.writerow(
                    [f"{x:.10g}" for x in point]
                    + [l, 1 if sets[l - 1, gidx] else 2]
                )
    finally:
        if args.out:
            fh.close()
    return 0


def _cmd_train_spsa(args) -> int:
    scenario = load_scenario(args.model)
    seed = int(_pick(args.seed, scenario.seed, 0))
    horizon = _pick(args.horizon, scenario.horizon, None)
    config = SpsaConfig(
        max_iter=args.iters,
        mc_runs=args.mc_runs,
        horizon=horizon,
        seed=seed,
    )
    result = train_multistart(
        scenario.model,
        config=config,
        n_starts=args.starts,
        parametrization=args.parametrization,
    )
    doc = _meta(scenario, seed)
    doc["parametrization"] = result.parametrization
    doc["objective"] = result.objective
    doc["iterations"] = result.iterations
    doc["converged"] = result.converged
    doc["policy"] = policy_to_dict(
        ThresholdPolicy(result.params())
        if result.parametrization == "threshold"
        else SoftmaxPolicy(result.params())
    )
    _write_json(args.out, doc)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            fh.write(f"# scenario_sha256={scenario.sha256} seed={seed}\n")
            writer = csv.writer(fh)
            writer.writerow(["iter", "J_plus", "J_minus", "grad_norm"])
            for row in result.trace:
                writer.writerow(
                    [int(row[0]), f"{row[1]:.10g}", f"{row[2]:.10g}", f"{row[3]:.10g}"]
                )
    return 0


def _policy_from_token(token: str, scenario: Scenario, grid_flag):
    """A policy file path or one of: optimal, heuristic, periodic[:K]."""
    if token == "optimal":
        return TablePolicy(solve(scenario.model, grid=_grid_for(scenario, grid_flag))), token
    if token == "heuristic":
        return heuristic_policy(scenario.model, grid=_grid_for(scenario, grid_flag)), token
    if token == "periodic" or token.startswith("periodic:"):
        period = scenario.period
        if ":" in token:
            period = int(token.split(":", 1)[1])
        if period is None:
            raise ValidationError("periodic policy needs a period (periodic:K or scenario block)")
        return periodic_policy(period), f"periodic{period}"
    path = Path(token)
    if not path.exists():
        raise ValidationError(f"policy file not found: {token}")
    return load_policy(path, model=scenario.model), path.stem


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.model)
    seed = int(_pick(args.seed, scenario.seed, 0))
    horizon = _pick(args.horizon, scenario.horizon, None)
    runs = int(_pick(args.runs, scenario.runs, 1000))
    policy, label = _policy_from_token(args.policy, scenario, args.grid)
    report = evaluate(
        scenario.model, policy, runs=runs, horizon=horizon, seed=seed, label=label
    )
    doc = _meta(scenario, seed)
    doc["report"] = report.to_dict(include_rewards=args.per_run)
    _write_json(args.out, doc)
    return 0


def _cmd_compare(args) -> int:
    scenario = load_scenario(args.model)
    seed = int(_pick(args.seed, scenario.seed, 0))
    horizon = _pick(args.horizon, scenario.horizon, None)
    if horizon is None:
        horizon = default_horizon(scenario.model)
    runs = int(_pick(args.runs, scenario.runs, 1000))
    reports = []
    for token in args.policies:
        policy, label = _policy_from_token(token, scenario, args.grid)
        reports.append(
            evaluate(
                scenario.model, policy, runs=runs, horizon=horizon, seed=seed, label=label
            )
        )
    base = reports[0].mean
    fh = _open_csv(args.out)
    try:
        fh.write(f"# scenario_sha256={scenario.sha256} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["label", "runs", "horizon", "mean", "stderr", "ci_low", "ci_high", "rel_vs_first"]
        )
        for rep in reports:
            rel = rep.mean / base if base != 0 else float("nan")
            writer.writerow(
                [
                    rep.label,
                    rep.runs,
                    rep.horizon,
                    f"{rep.mean:.10g}",
                    f"{rep.stderr:.10g}",
                    f"{rep.ci_low:.10g}",
                    f"{rep.ci_high:.10g}",
                    f"{rel:.10g}",
                ]
            )
    finally:
        if args.out:
            fh.close()
    return 0


def _parse_state_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok]


def _cmd_fit(args) -> int:
    path = Path(args.events)
    if not path.exists():
        raise ValidationError(f"event file not found: {args.events}")
    raw = path.read_bytes()
    seed = args.seed if args.seed is not None else 0
    log = EventLog.from_csv(path)
    series = bin_events(log, width=args.width)
    results = bic_scan(
        series,
        _parse_state_range(args.states),
        seed=seed,
        n_starts=args.starts,
    )
    best = best_fit(results)
    doc = {
        "tool": f"multistop {__version__}",
        "scenario": path.name,
        "scenario_sha256": hashlib.sha256(raw).hexdigest(),
        "seed": seed,
        "bin_width": args.width,
        "n_obs": len(series.counts),
        "fits": [r.to_dict() for r in results],
        "selected_states": best.S,
    }
    _write_json(args.out, doc)
    if args.model_out:
        rewards = (
            np.asarray([float(x) for x in args.rewards.split(",")])
            if args.rewards
            else np.arange(best.S, 0, -1, dtype=np.float64)
        )
        model = best.to_model(rewards, rho=args.discount, L=args.stops)
        save_model(model, args.model_out)
    if args.cdf_out:
        values = one_step_cdf_values(series, best)
        with open(args.cdf_out, "w", newline="") as fh:
            fh.write(
                f"# scenario_sha256={hashlib.sha256(raw).hexdigest()} seed={seed}\n"
            )
            writer = csv.writer(fh)
            writer.writerow(["t", "count", "cdf"])
            for t, (c, v) in enumerate(zip(series.counts, values)):
                writer.writerow([t, int(c), f"{v:.10g}"])
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--threads", type=int, default=None, help="cap worker threads")
    sub.add_argument("--out", default=None, help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multistop",
        description="Solve, tune, and evaluate multiple-stopping policies for "
        "partially observed Markov chains.",
    )
    parser.add_argument("--version", action="version", version=f"multistop {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("check", help="verify structural assumptions of a model")
    p.add_argument("model")
    _add_common(p)
    p.set_defaults(func=_cmd_check)
    p.add_argument("--grid", type=int, default=None, help=argparse.SUPPRESS)

    p = subs.add_parser("solve", help="value iteration on a belief grid")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=None, help="grid resolution")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10_000)
    _add_common(p)
    p.set_defaults(func=_cmd_solve)

    p = subs.add_parser("export-sets", help="stopping regions as CSV")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--value", default=None, help="reuse a solve output instead of resolving")
    _add_common(p)
    p.set_defaults(func=_cmd_export_sets)

    p = subs.add_parser("train-spsa", help="simulation-based policy search")
    p.add_argument("model")
    p.add_argument(
        "--parametrization", choices=("threshold", "softmax"), default="threshold"
    )
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--mc-runs", type=int, default=100)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--trace", default=None, help="per-iteration CSV trace")
    _add_common(p)
    p.set_defaults(func=_cmd_train_spsa)

    p = subs.add_parser("simulate", help="Monte Carlo evaluation of one policy")
    p.add_argument("model")
    p.add_argument("--policy", required=True, help="policy file or optimal/heuristic/periodic[:K]")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--per-run", action="store_true", help="include per-run rewards")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("compare", help="evaluate several policies under shared seeds")
    p.add_argument("model")
    p.add_argument("--policies", nargs="+", required=True)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--grid", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_compare)

    p = subs.add_parser("fit", help="estimate a chain from an event CSV")
    p.add_argument("events")
    p.add_argument("--states", default="2..6", help="state counts, e.g. 2..8 or 3,4,5")
    p.add_argument("--width", type=float, default=2.0, help="bin width in seconds")
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--model-out", default=None, help="export the selected fit as a model file")
    p.add_argument("--cdf-out", default=None, help="one-step-ahead cdf values CSV")
    p.add_argument("--rewards", default=None, help="comma list for --model-out")
    p.add_argument("--discount", type=float, default=0.9, help="discount for --model-out")
    p.add_argument("--stops", type=int, default=1, help="stop budget for --model-out")
    _add_common(p)
    p.set_defaults(func=_cmd_fit)
    return parser


def _apply_threads(args) -> None:
    threads = getattr(args, "threads", None)
    if threads:
        try:
            import numba

            numba.set_num_threads(max(1, int(threads)))
        except Exception:
            pass


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return 0 if code == 0 else 1
    _apply_threads(args)
    try:
        return args.func(args)
    except (ValidationError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
