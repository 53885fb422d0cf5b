"""Command-line entry point: batch simulation, survey analytics, one-shot
batch planning, and the HTTP service.

Outputs are data files (JSON + CSV); plotting is left to external tools.
Verbosity is controlled by the APS_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .allocation import BatchConstraintSpec, batch_allocate
from .bounds import DeltaSchedule, IntervalSet, update_intervals, variance_ucb
from .exceptions import ApsError, InputError
from .posterior import PosteriorState, PriorSpec
from .simulator import ExperimentConfig, run_experiment
from .survey import compare_allocations, ingest, overall_estimate

log = logging.getLogger("aps.cli")

_BUNDLED_CONFIGS = {"two-arm-binary": "two_arm_binary.json"}


def _setup_logging() -> None:
    level = os.environ.get("APS_LOG", "warning").strip().upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load_config_text(name_or_path: str) -> str:
    if name_or_path in _BUNDLED_CONFIGS:
        ref = resources.files("aps").joinpath("configs",
                                              _BUNDLED_CONFIGS[name_or_path])
        return ref.read_text(encoding="utf-8")
    path = Path(name_or_path)
    if not path.exists():
        raise InputError(
            f"config {name_or_path!r} is neither a file nor a bundled name "
            f"(bundled: {sorted(_BUNDLED_CONFIGS)})")
    return path.read_text(encoding="utf-8")


def _out_dir(arg: str | None) -> Path:
    out = Path(arg) if arg else Path("aps-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args: argparse.Namespace) -> int:
    raw = json.loads(_load_config_text(args.config))
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(raw)
    log.info("simulate: K=%d L=%d N=%d R=%d strategies=%s",
             cfg.num_arms, cfg.num_symbols, cfg.budget, cfg.replications,
             cfg.strategies)
    report = run_experiment(cfg, workers=args.workers)
    out = _out_dir(args.out)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    print(f"wrote {out / 'report.json'} and {out / 'report.csv'}")
    return 0


def _cmd_analyze_survey(args: argparse.Namespace) -> int:
    ds = ingest(args.csv)
    comparison = compare_allocations(
        ds,
        batch_size=args.batch_size,
        replications=args.replications,
        seed=args.seed if args.seed is not None else 0,
        theta0_override=args.theta0,
    )
    out = _out_dir(args.out)
    (out / "allocations.csv").write_text(comparison.to_csv(), encoding="utf-8")
    (out / "allocations.json").write_text(comparison.to_json(), encoding="utf-8")
    try:
        overall = overall_estimate(ds)
        print(f"overall positivity estimate: {overall.r_hat:.6g} "
              f"(plug-in mse {overall.mse_plugin:.3e})")
    except InputError as exc:
        print(f"overall estimate unavailable: {exc}")
    if not comparison.feasible:
        print(f"warning: accuracy targets infeasible (lambda = {comparison.lam:.4g})")
    print(f"wrote {out / 'allocations.csv'} and {out / 'allocations.json'}")
    return 0


def _plan_from_snapshot(snapshot: dict, batch_size: int | None) -> dict:
    try:
        cats = snapshot["categories"]
        b = int(batch_size if batch_size is not None else snapshot["batch_size"])
    except KeyError as exc:
        raise InputError(f"snapshot missing required field {exc}") from exc
    if not cats:
        raise InputError("snapshot has no categories")
    names = [c.get("name", f"category_{i}") for i, c in enumerate(cats)]
    weights = np.array([float(c["weight"]) for c in cats])
    theta = np.array([float(c["theta"]) if c.get("theta") is not None else np.inf
                      for c in cats])
    theta0 = (float(snapshot["theta0"])
              if snapshot.get("theta0") is not None else np.inf)
    counts = np.array([float(c.get("T", 0)) for c in cats])
    if all("u" in c for c in cats):
        u = np.array([float(c["u"]) for c in cats])
    elif all("alpha" in c for c in cats):
        # Posterior snapshot: rebuild variance bounds from the current
        # Dirichlet parameters. Without the session's intersection history
        # the scratch intervals are conservative supersets, so the resulting
        # u values can only be larger (never anti-conservative).
        alphas = np.array([c["alpha"] for c in cats], dtype=np.float64)
        if alphas.ndim != 2 or alphas.shape[1] < 2:
            raise InputError("alpha entries must be per-symbol parameter lists")
        budget = int(snapshot.get("budget", max(1, int(counts.sum()) + b)))
        eta = float(snapshot.get("eta", min(1.0, 1.0 / budget)))
        schedule = DeltaSchedule(len(cats), alphas.shape[1], budget, eta)
        step = min(int(counts.sum()) + 1, budget)
        state = PosteriorState(alphas, np.zeros_like(alphas, dtype=np.int64),
                               step=1)
        scratch = IntervalSet.full(*alphas.shape)
        intervals = update_intervals(scratch, state, schedule,
                                     step_override=step)
        u = np.array([variance_ucb(intervals, k).value
                      for k in range(len(cats))])
    else:
        raise InputError("every category needs either 'u' or 'alpha'")
    spec = BatchConstraintSpec(theta=theta, theta0=theta0, weights=weights,
                               batch_size=b)
    result = batch_allocate(u, counts, spec)
    return {
        "batch_size": b,
        "lam": result.lam,
        "overall_term": result.overall_term,
        "categories": [
            {
                "name": names[i],
                "tau": float(result.real[i]),
                "tau_int": int(result.integer[i]),
                "u": float(u[i]),
                "T": float(counts[i]),
                "binding": bool(result.binding_per_category[i]),
            }
            for i in range(len(cats))
        ],
        "binding_overall": result.binding_overall,
    }


def _cmd_plan_batch(args: argparse.Namespace) -> int:
    path = Path(args.snapshot)
    if not path.exists():
        raise InputError(f"snapshot file {path} does not exist")
    snapshot = json.loads(path.read_text(encoding="utf-8"))
    plan = _plan_from_snapshot(snapshot, args.batch_size)
    text = json.dumps(plan, indent=2, sort_keys=True)
    if args.out:
        out = _out_dir(args.out)
        (out / "plan.json").write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out / 'plan.json'}")
    else:
        print(text)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.journal)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aps",
        description="Adaptive Bayesian-UCB sampling: simulation, survey "
                    "allocation analytics, batch planning, and the operator "
                    "service.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment from "
                                          "a JSON config")
    sim.add_argument("--config", required=True,
                     help="path to a JSON experiment config, or a bundled "
                          "name such as 'two-arm-binary'")
    sim.add_argument("--out", help="output directory (default ./aps-out)")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--workers", type=int,
                     help="worker threads for replications")
    sim.set_defaults(func=_cmd_simulate)

    sv = sub.add_parser("analyze-survey",
                        help="compare survey allocations against oracle and "
                             "adaptive strategies")
    sv.add_argument("csv", help="survey CSV "
                                "(category,weight,samples,positives[,theta])")
    sv.add_argument("--out", help="output directory (default ./aps-out)")
    sv.add_argument("--batch-size", type=int, default=100,
                    help="batch size for the adaptive replay (default 100)")
    sv.add_argument("--replications", type=int, default=50,
                    help="Monte Carlo replications for the adaptive replay")
    sv.add_argument("--seed", type=int, help="replay seed (default 0)")
    sv.add_argument("--theta0", type=float,
                    help="override the overall accuracy target")
    sv.set_defaults(func=_cmd_analyze_survey)

    pb = sub.add_parser("plan-batch",
                        help="one-shot batch allocation from a posterior "
                             "snapshot file")
    pb.add_argument("snapshot", help="JSON snapshot with per-category "
                                     "weight/theta and u or alpha")
    pb.add_argument("--out", help="write plan.json here instead of stdout")
    pb.add_argument("--batch-size", type=int,
                    help="override the snapshot's batch size")
    pb.set_defaults(func=_cmd_plan_batch)

    srv = sub.add_parser("serve", help="start the HTTP/JSON planning service")
    srv.add_argument("--journal", default="aps-journal.jsonl",
                     help="append-only session journal (default "
                          "./aps-journal.jsonl)")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ApsError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
