"""End-to-end orchestration and artifact export."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, TextIO, TypeVar

from . import __version__
from .advisor import DirectionRule, extract_cardinal_rules
from .clustering import ManifoldSet, build_manifold_set
from .config import PipelineConfig
from .errors import AffordviewError, ValidationError
from .geometry import ViewpointSet, load_viewpoints
from .stats import StatsReport, validate_model
from .trials import (
    AFFORDANCES,
    Affordance,
    PerformanceSample,
    TrialSet,
    ingest_trials,
    outlier_bounds,
    reject_outliers,
    rejection_report,
    score_performance,
)
from .valuation import ViewpointValue, value_field, values_to_csv

T = TypeVar("T")


class StageError(AffordviewError):
    """Failure of one pipeline stage; ``cause`` is the underlying error."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")

    @property
    def kind(self) -> str:
        return type(self.cause).__name__


def _stage(name: str, fn: Callable[[], T]) -> T:
    try:
        return fn()
    except StageError:
        raise
    except AffordviewError as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class PipelineResult:
    config: PipelineConfig
    viewpoints: ViewpointSet
    trials: TrialSet
    kept: TrialSet
    rejected: TrialSet
    rejections: list[dict[str, Any]]
    samples: list[PerformanceSample]
    values: Mapping[Affordance, list[ViewpointValue]]
    manifold_sets: Mapping[Affordance, ManifoldSet]
    stats: StatsReport
    rules: Mapping[Affordance, DirectionRule]

    @property
    def affordances(self) -> list[Affordance]:
        return [a for a in AFFORDANCES if a in self.manifold_sets]

    def report(self) -> dict[str, Any]:
        return {
            "header": {"tool": "affordview", "version": __version__, "seed": self.config.seed, "config": self.config.to_dict()},
            "data": {
                "n_trials": len(self.trials),
                "n_kept": len(self.kept),
                "n_rejected": len(self.rejected),
                "n_subjects": len(self.trials.subjects),
                "n_viewpoints": len(self.viewpoints),
            },
            "manifold_sets": [self.manifold_sets[a].to_dict() for a in self.affordances],
            "stats": self.stats.to_dict(),
            "rules": [self.rules[a].to_dict() for a in self.affordances],
        }


def _map(workers: int) -> Callable:
    if workers <= 1:
        return lambda fn, items: list(map(fn, items))

    def _pool_map(fn: Callable, items: Iterable) -> list:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    return _pool_map


def run_pipeline(config: PipelineConfig, trials: TrialSet | TextIO | str | Path) -> PipelineResult:
    """ingest -> outliers -> normalize/score -> value -> cluster -> validate -> rules."""
    vs = _stage("viewpoints", config.viewpoint_set)
    if isinstance(trials, TrialSet):
        ts = trials
        unknown = sorted({r.viewpoint for r in ts} - set(vs.ids))
        if unknown:
            raise StageError("ingest", ValidationError(f"unknown viewpoint ids {unknown}"))
    else:
        ts = _stage("ingest", lambda: ingest_trials(trials, vs.ids))

    def _outliers() -> tuple[TrialSet, TrialSet, list[dict[str, Any]]]:
        bounds = outlier_bounds(ts, config.mad_threshold, config.mad_scale)
        kept, rejected = reject_outliers(ts, config.mad_threshold, config.mad_scale)
        return kept, rejected, rejection_report(rejected, bounds)

    kept, rejected, rejections = _stage("outliers", _outliers)
    samples = _stage("normalize", lambda: score_performance(kept, config.weights))
    present = [a for a in AFFORDANCES if any(s.affordance == a for s in samples)]
    pmap = _map(config.workers)

    def _value(aff: Affordance) -> list[ViewpointValue]:
        return value_field(samples, vs, config.weights, aff, impute=config.impute)

    values = dict(zip(present, _stage("valuation", lambda: pmap(_value, present))))

    def _cluster(aff: Affordance) -> ManifoldSet:
        return build_manifold_set(values[aff], vs, samples, config.weights, config.k_max)

    msets = dict(zip(present, _stage("clustering", lambda: pmap(_cluster, present))))
    stats = _stage("validation", lambda: validate_model(msets, samples, kept, config.alpha))
    rules = _stage("rules", lambda: {a: extract_cardinal_rules(values[a], vs) for a in present})
    return PipelineResult(config, vs, ts, kept, rejected, rejections, samples, values, msets, stats, rules)


def dumps(doc: Any) -> str:
    """Canonical JSON: sorted keys, non-finite floats as null."""
    return json.dumps(_sanitize(doc), indent=2, sort_keys=True) + "\n"


def _sanitize(x: Any) -> Any:
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, Mapping):
        return {str(k): _sanitize(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_sanitize(v) for v in x]
    return x


def manifolds_document(result: PipelineResult) -> dict[str, Any]:
    return {
        "radius_m": result.viewpoints.radius,
        "weights": result.config.weights.to_dict(),
        "manifold_sets": [result.manifold_sets[a].to_dict() for a in result.affordances],
    }


def load_manifolds(path: str | Path) -> dict[Affordance, ManifoldSet]:
    """Read ``manifolds.json`` written by :func:`write_artifacts`."""
    try:
        doc = json.loads(Path(path).read_text())
        sets = [ManifoldSet.from_dict(item) for item in doc["manifold_sets"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read manifold models from {path}: {exc}") from exc
    return {ms.affordance: ms for ms in sets}


def plot_rows(result: PipelineResult, aff: Affordance) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["viewpoint", "theta", "phi", "group", "value", "manifold_rank"])
    assign = result.manifold_sets[aff].assignment()
    value_of = {v.viewpoint: v.value for v in result.values[aff]}
    for vp in result.viewpoints:
        group = result.viewpoints.groups.get(vp.id)
        writer.writerow([vp.id, repr(vp.theta), repr(vp.phi), group.value if group else "", repr(value_of[vp.id]), assign[vp.id]])
    return buf.getvalue()


def write_artifacts(result: PipelineResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    written = {
        "values": out / "values.csv",
        "manifolds": out / "manifolds.json",
        "report": out / "report.json",
        "rejected": out / "rejected.json",
        "viewpoints": out / "viewpoints.json",
    }
    written["values"].write_text(values_to_csv(v for a in result.affordances for v in result.values[a]))
    written["manifolds"].write_text(dumps(manifolds_document(result)))
    written["report"].write_text(dumps(result.report()))
    written["rejected"].write_text(dumps(result.rejections))
    written["viewpoints"].write_text(dumps(result.viewpoints.to_dict()))
    for aff in result.affordances:
        path = out / "plotdata" / f"{aff.value}.csv"
        path.write_text(plot_rows(result, aff))
        written[f"plot_{aff.value}"] = path
        tree = result.manifold_sets[aff].dendrogram
        if tree is not None:
            tpath = out / "plotdata" / f"{aff.value}_dendrogram.csv"
            tpath.write_text(tree.to_csv())
            written[f"dendrogram_{aff.value}"] = tpath
    return written


def load_model_dir(models_dir: str | Path) -> tuple[dict[Affordance, ManifoldSet], ViewpointSet | None]:
    root = Path(models_dir)
    path = root / "manifolds.json" if root.is_dir() else root
    if not path.exists():
        raise ValidationError(f"missing model file {path}")
    msets = load_manifolds(path)
    vpath = path.parent / "viewpoints.json"
    vs = load_viewpoints(vpath) if vpath.exists() else None
    return msets, vs


def exit_code_for(exc: BaseException) -> int:
    """2 for validation failures, 3 for numerical ones."""
    cause = exc.cause if isinstance(exc, StageError) else exc
    return 2 if isinstance(cause, ValidationError) else 3
