"""Command-line front end.

Exit codes: 0 ok, 2 validation error, 3 numerical failure, 4 acceptance mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .advisor import SWEEP_GRID, TaskPlan, advise, extract_cardinal_rules, sensitivity_sweep
from .config import PipelineConfig
from .errors import AffordviewError, ValidationError
from .pipeline import StageError, dumps, exit_code_for, load_model_dir, run_pipeline, write_artifacts, _map
from .synth import SyntheticSpec, smooth_quality, write_synthetic
from .table6 import check_table6, load_summaries
from .trials import AFFORDANCES, Weights, ingest_trials, reject_outliers, score_performance
from .valuation import value_field

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_MISMATCH = 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON pipeline configuration")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, help="seed recorded in reports and used by synth")
    p.add_argument("--weights", metavar="WT,WE,WM,WD", help="performance and value weights")
    p.add_argument("--kmax", type=int, help="upper bound on manifolds per affordance")
    p.add_argument("--alpha", type=float, help="significance level")
    p.add_argument("--viewpoints", metavar="PATH", help="viewpoint-set JSON (default: built-in lattice)")
    p.add_argument("--workers", type=int, help="threads for per-affordance work")
    p.add_argument("--impute", action="store_true", default=None, help="impute unsampled viewpoints by group mean")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affordview", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="learn manifolds and validate them from a trial CSV")
    p.add_argument("trials", help="trial CSV")
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic trial CSV")
    _common(p)
    p.add_argument("--spec", metavar="PATH", help="SyntheticSpec JSON (default: smooth fields)")
    p.add_argument("--subjects", type=int, help="number of subjects")

    p = sub.add_parser("advise", help="recommend viewpoints for a task plan")
    p.add_argument("models", help="directory (or manifolds.json) written by 'run'")
    p.add_argument("plan", help="task plan JSON")
    _common(p)

    p = sub.add_parser("table6", help="recompute best-vs-worst statistics from group summaries")
    p.add_argument("summaries", nargs="?", help="summaries JSON (default: bundled published rows)")
    _common(p)

    p = sub.add_parser("sweep", help="weight sensitivity of the manifolds")
    p.add_argument("trials", help="trial CSV")
    _common(p)

    p = sub.add_parser("rules", help="cardinal-direction rules per affordance")
    p.add_argument("trials", help="trial CSV")
    _common(p)
    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    base = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return base.with_overrides(
        weights=Weights.parse(args.weights) if args.weights else None,
        k_max=args.kmax,
        alpha=args.alpha,
        seed=args.seed,
        viewpoints=args.viewpoints,
        workers=args.workers,
        impute=args.impute,
    )


def _out_dir(args: argparse.Namespace, default: str = ".") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    config = _config(args)
    result = run_pipeline(config, args.trials)
    out = _out_dir(args, "affordview-out")
    write_artifacts(result, out)
    for aff in result.affordances:
        ms = result.manifold_sets[aff]
        print(f"{aff.title}: {ms.k} manifolds, best value {ms.best.value:.3f}, area {ms.best.area_fraction:.0%}")
    print(f"{len(result.rejected)} of {len(result.trials)} trials rejected as outliers; artifacts in {out}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = _config(args)
    vs = config.viewpoint_set()
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read synthetic spec: {exc}") from exc
        spec = SyntheticSpec.from_dict(doc)
    else:
        spec = SyntheticSpec(quality=smooth_quality(vs))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.subjects is not None:
        overrides["n_subjects"] = args.subjects
    if overrides:
        spec = replace(spec, **overrides)
    path = write_synthetic(spec, _out_dir(args), vs)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_advise(args: argparse.Namespace) -> int:
    msets, vs = load_model_dir(args.models)
    plan = TaskPlan.load(args.plan)
    advice = advise(plan, msets, vs)
    out = Path(args.out) if args.out else Path(args.models) / "advice.json"
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "advice.json"
    out.write_text(dumps(advice.to_dict()))
    print(advice.summary())
    return EXIT_OK


def cmd_table6(args: argparse.Namespace) -> int:
    report = check_table6(load_summaries(args.summaries))
    for row in report["rows"]:
        status = "ok" if row.get("ok", True) else "MISMATCH"
        print(
            f"{row['affordance']:<15} t={row['t_statistic']:.4f} p={row['p_value']:.5g} "
            f"d={row['cohens_d']:.4f}  {status}"
        )
    if args.out:
        (_out_dir(args) / "table6_check.json").write_text(dumps(report))
    return EXIT_OK if report["ok"] else EXIT_MISMATCH


def _samples_for(args: argparse.Namespace):
    config = _config(args)
    vs = config.viewpoint_set()
    ts = ingest_trials(args.trials, vs.ids)
    kept, _ = reject_outliers(ts, config.mad_threshold, config.mad_scale)
    return config, vs, score_performance(kept, config.weights)


def cmd_sweep(args: argparse.Namespace) -> int:
    config, vs, samples = _samples_for(args)
    report = sensitivity_sweep(
        samples, vs, config.weights, SWEEP_GRID, config.k_max, impute=config.impute, map_fn=_map(config.workers)
    )
    out = _out_dir(args)
    (out / "sensitivity.json").write_text(dumps(report.to_dict()))
    for w_m, entry in report.to_dict().items():
        verdicts = ", ".join(f"{aff}: {item.get('verdict')}" for aff, item in entry.items())
        print(f"w_m={w_m}  {verdicts}")
    return EXIT_OK


def cmd_rules(args: argparse.Namespace) -> int:
    config, vs, samples = _samples_for(args)
    present = [a for a in AFFORDANCES if any(s.affordance == a for s in samples)]
    rules = [extract_cardinal_rules(value_field(samples, vs, config.weights, a, config.impute), vs) for a in present]
    (_out_dir(args) / "rules.json").write_text(dumps([r.to_dict() for r in rules]))
    for r in rules:
        print(f"{r.affordance.title}: view from {' / '.join(d.value for d in r.selected)}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "synth": cmd_synth,
    "advise": cmd_advise,
    "table6": cmd_table6,
    "sweep": cmd_sweep,
    "rules": cmd_rules,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AffordviewError as exc:
        code = exit_code_for(exc)
        error = {
            "status": "error",
            "command": args.command,
            "stage": exc.stage if isinstance(exc, StageError) else args.command,
            "kind": exc.kind if isinstance(exc, StageError) else type(exc).__name__,
            "message": str(exc.cause if isinstance(exc, StageError) else exc),
            "exit_code": code,
        }
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
