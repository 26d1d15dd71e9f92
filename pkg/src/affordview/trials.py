"""Trial ingestion, per-subject normalization, performance scoring and outlier rejection."""

from __future__ import annotations

import csv
import io
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence, TextIO

import numpy as np

from .errors import DegenerateError, ValidationError

CSV_HEADER = ("subject", "robot", "affordance", "viewpoint", "time_s", "errors")

MAD_SCALE = 1.4826
MAD_THRESHOLD = 3.0


class Affordance(str, Enum):
    REACHABILITY = "reachability"
    PASSABILITY = "passability"
    MANIPULABILITY = "manipulability"
    TRAVERSABILITY = "traversability"

    @classmethod
    def parse(cls, token: str) -> "Affordance":
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown affordance {token!r}") from None

    @property
    def title(self) -> str:
        return self.value.capitalize()


AFFORDANCES = tuple(Affordance)


@dataclass(frozen=True)
class Weights:
    """Time/error weights of the performance score and mean/std weights of values."""

    w_t: float = 0.4
    w_e: float = 0.6
    w_m: float = 0.9
    w_d: float = 0.1

    def __post_init__(self) -> None:
        for name in ("w_t", "w_e", "w_m", "w_d"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"weight {name} must be a nonnegative number, got {value}")
        if self.w_t + self.w_e <= 0:
            raise ValidationError("w_t + w_e must be positive")
        if self.w_m + self.w_d <= 0:
            raise ValidationError("w_m + w_d must be positive")

    @classmethod
    def parse(cls, text: str) -> "Weights":
        """Parse ``"wt,we,wm,wd"``."""
        parts = [p for p in text.split(",") if p.strip()]
        if len(parts) != 4:
            raise ValidationError(f"expected four comma-separated weights, got {text!r}")
        try:
            numbers = [float(p) for p in parts]
        except ValueError:
            raise ValidationError(f"weights must be numbers, got {text!r}") from None
        return cls(*numbers)

    def to_dict(self) -> dict[str, float]:
        return {"w_t": self.w_t, "w_e": self.w_e, "w_m": self.w_m, "w_d": self.w_d}


def subject_sort_key(subject: str) -> tuple:
    """Natural ordering so that subject "10" sorts after "9"."""
    return tuple((0, int(tok), "") if tok.isdigit() else (1, 0, tok) for tok in re.findall(r"\d+|\D+", subject))


@dataclass(frozen=True)
class TrialRecord:
    subject: str
    robot: str
    affordance: Affordance
    viewpoint: int
    time: float
    errors: int
    row: int | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[str, Affordance, int]:
        return (self.subject, self.affordance, self.viewpoint)

    def sort_key(self) -> tuple:
        return (subject_sort_key(self.subject), AFFORDANCES.index(self.affordance), self.viewpoint)


@dataclass(frozen=True)
class TrialSet:
    """Validated, canonically ordered trial records."""

    records: tuple[TrialRecord, ...]

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> "TrialSet":
        seen: dict[tuple, TrialRecord] = {}
        for rec in records:
            if not rec.time > 0 or not math.isfinite(rec.time):
                raise ValidationError(f"time must be positive, got {rec.time}", row=rec.row)
            if rec.errors < 0:
                raise ValidationError(f"errors must be nonnegative, got {rec.errors}", row=rec.row)
            if rec.key in seen:
                raise ValidationError(
                    f"duplicate key subject={rec.subject}, affordance={rec.affordance.title}, viewpoint={rec.viewpoint}",
                    row=rec.row,
                )
            seen[rec.key] = rec
        return cls(tuple(sorted(seen.values(), key=TrialRecord.sort_key)))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TrialRecord]:
        return iter(self.records)

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({r.subject for r in self.records}, key=subject_sort_key))

    def for_affordance(self, affordance: Affordance) -> "TrialSet":
        return TrialSet(tuple(r for r in self.records if r.affordance == affordance))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow([r.subject, r.robot, r.affordance.value, r.viewpoint, repr(float(r.time)), int(r.errors)])
        return buf.getvalue()


@dataclass(frozen=True)
class PerformanceSample:
    subject: str
    robot: str
    affordance: Affordance
    viewpoint: int
    norm_time: float
    norm_errors: float
    performance: float


def ingest_trials(stream: TextIO | str | Path, viewpoint_ids: Iterable[int] | None = None) -> TrialSet:
    """Parse and validate a trial CSV.

    Args:
        stream: open text stream or path to the CSV file.
        viewpoint_ids: allowed viewpoint ids; unchecked when ``None``.

    Raises:
        ValidationError: with the offending source line number.
    """
    if isinstance(stream, (str, Path)):
        try:
            with open(stream, newline="") as fh:
                return ingest_trials(fh, viewpoint_ids)
        except OSError as exc:
            raise ValidationError(f"cannot read trials: {exc}") from exc

    allowed = set(viewpoint_ids) if viewpoint_ids is not None else None
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise ValidationError("empty trials file")
    if tuple(h.strip().lower() for h in header) != CSV_HEADER:
        raise ValidationError(f"header must be {','.join(CSV_HEADER)}, got {','.join(header)}", row=1)

    records = []
    for fields in reader:
        row = reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(CSV_HEADER):
            raise ValidationError(f"expected {len(CSV_HEADER)} fields, got {len(fields)}", row=row)
        subject, robot, affordance, viewpoint, time_s, errors = (f.strip() for f in fields)
        if not subject:
            raise ValidationError("empty subject", row=row)
        try:
            aff = Affordance.parse(affordance)
        except ValidationError as exc:
            raise ValidationError(str(exc), row=row) from None
        try:
            vid = int(viewpoint)
        except ValueError:
            raise ValidationError(f"viewpoint must be an integer, got {viewpoint!r}", row=row) from None
        if allowed is not None and vid not in allowed:
            raise ValidationError(f"unknown viewpoint id={vid}", row=row)
        try:
            t = float(time_s)
        except ValueError:
            raise ValidationError(f"time_s must be a number, got {time_s!r}", row=row) from None
        try:
            e = float(errors)
        except ValueError:
            raise ValidationError(f"errors must be an integer, got {errors!r}", row=row) from None
        if not e.is_integer():
            raise ValidationError(f"errors must be an integer, got {errors!r}", row=row)
        records.append(TrialRecord(subject, robot.lower(), aff, vid, t, int(e), row=row))
    if not records:
        raise ValidationError("trials file has no records")
    return TrialSet.from_records(records)


def _zscores(values: np.ndarray) -> np.ndarray | None:
    std = values.std(ddof=1) if values.size > 1 else 0.0
    if not std > 0:
        return None
    return (values - values.mean()) / std


def normalize_subject_measures(ts: TrialSet) -> list[tuple[float, float]]:
    """Per-subject z-scores of time and errors, aligned with ``ts.records``.

    Means and sample standard deviations pool every record of the subject
    across affordances and viewpoints. A subject whose errors never vary gets
    normalized errors of 0.
    """
    by_subject: dict[str, list[int]] = defaultdict(list)
    for idx, rec in enumerate(ts.records):
        by_subject[rec.subject].append(idx)

    out: list[tuple[float, float]] = [(0.0, 0.0)] * len(ts.records)
    for subject, idxs in by_subject.items():
        times = np.array([ts.records[i].time for i in idxs], dtype=float)
        errs = np.array([ts.records[i].errors for i in idxs], dtype=float)
        zt = _zscores(times)
        if zt is None:
            raise DegenerateError(f"subject {subject}: zero spread in completion time ({len(idxs)} records)")
        ze = _zscores(errs)
        if ze is None:
            ze = np.zeros_like(errs)
        for k, i in enumerate(idxs):
            out[i] = (float(zt[k]), float(ze[k]))
    return out


def performance(norm_time: float, norm_errors: float, w: Weights) -> float:
    """Negated weighted sum of normalized time and errors; higher is better."""
    return -w.w_t * norm_time - w.w_e * norm_errors


def score_performance(ts: TrialSet, w: Weights) -> list[PerformanceSample]:
    normalized = normalize_subject_measures(ts)
    return [
        PerformanceSample(r.subject, r.robot, r.affordance, r.viewpoint, nt, ne, performance(nt, ne, w))
        for r, (nt, ne) in zip(ts.records, normalized)
    ]


@dataclass(frozen=True)
class GroupBound:
    """Robust location and rejection half-width of one (affordance, viewpoint) group."""

    median: float
    mad: float
    bound: float
    size: int


def outlier_bounds(
    ts: TrialSet, threshold: float = MAD_THRESHOLD, scale: float = MAD_SCALE
) -> dict[tuple[Affordance, int], GroupBound]:
    groups: dict[tuple[Affordance, int], list[float]] = defaultdict(list)
    for rec in ts.records:
        groups[(rec.affordance, rec.viewpoint)].append(rec.time)
    out = {}
    for key, times in groups.items():
        arr = np.asarray(times)
        med = float(np.median(arr))
        mad = float(np.median(np.abs(arr - med)))
        out[key] = GroupBound(med, mad, threshold * scale * mad, len(times))
    return out


def reject_outliers(
    ts: TrialSet, threshold: float = MAD_THRESHOLD, scale: float = MAD_SCALE
) -> tuple[TrialSet, TrialSet]:
    """Split trials into kept and rejected by the scaled-MAD rule on completion time.

    Statistics are computed once per (affordance, viewpoint) group over all
    subjects; groups of two or fewer records are never trimmed.
    """
    bounds = outlier_bounds(ts, threshold, scale)
    kept, rejected = [], []
    for rec in ts.records:
        b = bounds[(rec.affordance, rec.viewpoint)]
        if b.size > 2 and abs(rec.time - b.median) > b.bound:
            rejected.append(rec)
        else:
            kept.append(rec)
    return TrialSet(tuple(kept)), TrialSet(tuple(rejected))


def rejection_report(
    rejected: Sequence[TrialRecord] | TrialSet, bounds: dict[tuple[Affordance, int], GroupBound]
) -> list[dict[str, Any]]:
    """JSON-ready ``{row, reason, bound, value}`` entries for rejected records."""
    report = []
    for rec in rejected:
        b = bounds[(rec.affordance, rec.viewpoint)]
        report.append(
            {
                "row": rec.row,
                "reason": (
                    f"time deviates from group median {b.median:g} s by more than "
                    f"the scaled-MAD bound (subject={rec.subject}, "
                    f"affordance={rec.affordance.value}, viewpoint={rec.viewpoint})"
                ),
                "bound": b.bound,
                "value": rec.time,
            }
        )
    return report
