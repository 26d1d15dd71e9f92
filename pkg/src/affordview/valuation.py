"""Per-viewpoint values and clustering-ready sample points."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateError, ValidationError
from .geometry import ViewpointSet
from .trials import AFFORDANCES, Affordance, PerformanceSample, Weights

VALUES_CSV_HEADER = ("affordance", "viewpoint", "value", "perf_mean", "perf_std", "n")


@dataclass(frozen=True)
class ViewpointValue:
    affordance: Affordance
    viewpoint: int
    value: float
    n_samples: int
    perf_mean: float
    perf_std: float
    imputed: bool = False


@dataclass(frozen=True)
class SamplePoint:
    viewpoint: int
    theta: float
    phi: float
    norm_value: float


def sample_std(values: Sequence[float]) -> float:
    """Sample (n-1) standard deviation; 0 for fewer than two values."""
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float), ddof=1))


def weighted_value(values: Sequence[float], w: Weights) -> float:
    """``w_m * mean - w_d * std`` of a non-empty collection."""
    return w.w_m * float(np.mean(values)) - w.w_d * sample_std(values)


def viewpoint_value(samples: Sequence[PerformanceSample], w: Weights) -> ViewpointValue:
    if not samples:
        raise ValidationError("cannot value a viewpoint without performance samples")
    key = (samples[0].affordance, samples[0].viewpoint)
    if any((s.affordance, s.viewpoint) != key for s in samples):
        raise ValidationError("samples span more than one (affordance, viewpoint)")
    perf = [s.performance for s in samples]
    return ViewpointValue(
        affordance=key[0],
        viewpoint=key[1],
        value=weighted_value(perf, w),
        n_samples=len(perf),
        perf_mean=float(np.mean(perf)),
        perf_std=sample_std(perf),
    )


def value_field(
    samples: Iterable[PerformanceSample],
    vs: ViewpointSet,
    w: Weights,
    affordance: Affordance,
    impute: bool = False,
) -> list[ViewpointValue]:
    """Value every lattice viewpoint for one affordance, in lattice order.

    A viewpoint with no samples is an error unless ``impute`` is set, in which
    case it receives the mean value of the sampled viewpoints in its cardinal
    group (flagged ``imputed``, ``n_samples=0``).
    """
    grouped: dict[int, list[PerformanceSample]] = defaultdict(list)
    for s in samples:
        if s.affordance == affordance:
            grouped[s.viewpoint].append(s)
    unknown = sorted(set(grouped) - set(vs.ids))
    if unknown:
        raise ValidationError(f"{affordance.title}: samples for unknown viewpoints {unknown}")

    valued = {vid: viewpoint_value(grouped[vid], w) for vid in vs.ids if grouped.get(vid)}
    missing = [vid for vid in vs.ids if vid not in valued]
    if missing and not impute:
        raise ValidationError(f"{affordance.title}: no performance samples for viewpoints {missing}")

    out = []
    for vid in vs.ids:
        if vid in valued:
            out.append(valued[vid])
            continue
        group = vs.groups.get(vid)
        peers = [valued[p].value for p in vs.ids if p in valued and vs.groups.get(p) == group]
        if not peers:
            raise ValidationError(f"{affordance.title}: cannot impute viewpoint {vid}, its group has no samples")
        mean = float(np.mean(peers))
        out.append(ViewpointValue(affordance, vid, mean, 0, mean, 0.0, imputed=True))
    return out


def make_sample_points(values: Sequence[ViewpointValue], vs: ViewpointSet) -> list[SamplePoint]:
    """Z-normalize a complete value field across the lattice and attach angles."""
    by_id: dict[int, ViewpointValue] = {}
    for v in values:
        if v.viewpoint in by_id:
            raise ValidationError(f"duplicate value for viewpoint {v.viewpoint}")
        if v.viewpoint not in vs:
            raise ValidationError(f"value for unknown viewpoint {v.viewpoint}")
        by_id[v.viewpoint] = v
    missing = [vid for vid in vs.ids if vid not in by_id]
    if missing:
        raise ValidationError(f"incomplete value field: missing viewpoints {missing}")

    raw = np.array([by_id[vid].value for vid in vs.ids])
    std = raw.std(ddof=1) if raw.size > 1 else 0.0
    if not std > 0:
        raise DegenerateError("flat value field: all viewpoint values are equal")
    norm = (raw - raw.mean()) / std
    return [SamplePoint(vp.id, vp.theta, vp.phi, float(z)) for vp, z in zip(vs, norm)]


def values_to_csv(values: Iterable[ViewpointValue]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(VALUES_CSV_HEADER)
    rows = sorted(values, key=lambda v: (AFFORDANCES.index(v.affordance), v.viewpoint))
    for v in rows:
        writer.writerow([v.affordance.value, v.viewpoint, repr(v.value), repr(v.perf_mean), repr(v.perf_std), v.n_samples])
    return buf.getvalue()
