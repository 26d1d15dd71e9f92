"""Seeded generator of synthetic teleoperation studies with a planted value field.

Each subject performs every affordance task once from each cardinal group.
Within a group the viewpoint is drawn by block randomization: subjects are
dealt a fresh random permutation of the group's members, so every viewpoint
receives a near-equal number of trials while individual assignments stay
random.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ValidationError
from .geometry import CardinalDirection, ViewpointSet, generate_default_viewpoints
from .trials import AFFORDANCES, Affordance, TrialRecord, TrialSet

# Relative task difficulty; only shifts the time scale per affordance.
_AFFORDANCE_SCALE = {
    Affordance.REACHABILITY: 1.0,
    Affordance.PASSABILITY: 0.9,
    Affordance.MANIPULABILITY: 1.4,
    Affordance.TRAVERSABILITY: 1.1,
}

# Preferred (elevation, azimuth) in degrees for the default smooth fields.
_PREFERRED = {
    Affordance.REACHABILITY: (45.0, 0.0),
    Affordance.PASSABILITY: (20.0, 180.0),
    Affordance.MANIPULABILITY: (80.0, 0.0),
    Affordance.TRAVERSABILITY: (25.0, 90.0),
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic study.

    ``quality`` maps affordance -> viewpoint id -> latent quality; higher is
    better. Completion time scales with ``exp(-time_gain * q)`` and the error
    count is Poisson with mean ``error_rate * exp(-error_gain * q)``.
    """

    quality: Mapping[Affordance, Mapping[int, float]]
    n_subjects: int = 31
    base_time_s: float = 25.0
    time_gain: float = 0.5
    speed_sigma: float = 0.25
    time_noise_sigma: float = 0.15
    error_rate: float = 0.6
    error_gain: float = 1.0
    packbot_fraction: float = 10 / 31
    outlier_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_subjects < 2:
            raise ValidationError("need at least two subjects")
        for name in ("base_time_s",):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("time_gain", "speed_sigma", "time_noise_sigma", "error_rate", "error_gain"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be a nonnegative number")
        if not 0 <= self.packbot_fraction <= 1 or not 0 <= self.outlier_rate <= 1:
            raise ValidationError("fractions must lie in [0, 1]")
        if not self.quality:
            raise ValidationError("quality field is empty")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SyntheticSpec":
        doc = dict(doc)
        try:
            quality = {
                Affordance.parse(aff): {int(k): float(v) for k, v in field_.items()}
                for aff, field_ in doc.pop("quality").items()
            }
            return cls(quality=quality, **doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed synthetic spec: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "quality"}
        out["quality"] = {a.value: {str(k): v for k, v in sorted(q.items())} for a, q in self.quality.items()}
        return out


def _angle_to(vs: ViewpointSet, elev_deg: float, azim_deg: float) -> dict[int, float]:
    e, a = math.radians(elev_deg), math.radians(azim_deg)
    target = np.array([math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)])
    return {vp.id: math.acos(float(np.clip(vp.unit_vector() @ target, -1.0, 1.0))) for vp in vs}


def smooth_quality(vs: ViewpointSet, amplitude: float = 1.0) -> dict[Affordance, dict[int, float]]:
    """Cosine fields peaking at a different preferred direction per affordance."""
    return {
        aff: {vid: amplitude * math.cos(ang) for vid, ang in _angle_to(vs, *_PREFERRED[aff]).items()}
        for aff in AFFORDANCES
    }


def plateau_quality(
    vs: ViewpointSet,
    center: tuple[float, float] = (30.0, 0.0),
    half_width_deg: float = 70.0,
    high: float = 1.0,
    low: float = -1.0,
    peak_bonus: float = 0.0,
) -> dict[int, float]:
    """Two-level field: ``high`` within ``half_width_deg`` of ``center`` (elevation, azimuth), ``low`` elsewhere.

    ``peak_bonus`` is added at the viewpoint closest to the center, which then
    becomes the unique best viewpoint.
    """
    angles = _angle_to(vs, *center)
    field_ = {vid: (high if math.degrees(ang) <= half_width_deg else low) for vid, ang in angles.items()}
    if peak_bonus:
        peak = min(angles, key=lambda vid: (angles[vid], vid))
        field_[peak] += peak_bonus
    return field_


def best_viewpoint(quality: Mapping[int, float]) -> int:
    return max(quality, key=lambda vid: (quality[vid], -vid))


def generate_trials(spec: SyntheticSpec, vs: ViewpointSet | None = None) -> TrialSet:
    """Simulate the study; deterministic for a given ``spec.seed``."""
    vs = vs or generate_default_viewpoints()
    rng = np.random.default_rng(spec.seed)
    for aff, q in spec.quality.items():
        missing = set(vs.ids) - set(q)
        if missing:
            raise ValidationError(f"{aff.title}: quality missing for viewpoints {sorted(missing)}")

    groups = [d for d in CardinalDirection if vs.members(d)]
    subjects = [str(j) for j in range(1, spec.n_subjects + 1)]
    n_packbot = round(spec.packbot_fraction * spec.n_subjects)
    robots = ["packbot" if k < n_packbot else "talon" for k in range(spec.n_subjects)]
    speed = rng.lognormal(0.0, spec.speed_sigma, size=spec.n_subjects)
    proneness = rng.lognormal(0.0, spec.speed_sigma, size=spec.n_subjects)

    affordances = [a for a in AFFORDANCES if a in spec.quality]
    # assignment[aff][group] -> viewpoint per subject
    assignment: dict[Affordance, dict[CardinalDirection, list[int]]] = {}
    for aff in affordances:
        assignment[aff] = {}
        for g in groups:
            members = list(vs.members(g))
            deck: list[int] = []
            while len(deck) < spec.n_subjects:
                deck.extend(members[i] for i in rng.permutation(len(members)))
            assignment[aff][g] = deck[: spec.n_subjects]

    records = []
    for k, subject in enumerate(subjects):
        # Session order is randomized per subject; it does not affect the output.
        rounds = [(aff, g) for aff in affordances for g in groups]
        for r in rng.permutation(len(rounds)):
            aff, g = rounds[r]
            vid = assignment[aff][g][k]
            q = spec.quality[aff][vid]
            t = (
                spec.base_time_s
                * _AFFORDANCE_SCALE[aff]
                * speed[k]
                * math.exp(-spec.time_gain * q)
                * rng.lognormal(0.0, spec.time_noise_sigma)
            )
            if spec.outlier_rate and rng.random() < spec.outlier_rate:
                t *= 4.0
            errors = int(rng.poisson(spec.error_rate * proneness[k] * math.exp(-spec.error_gain * q)))
            records.append(TrialRecord(subject, robots[k], aff, vid, round(float(t), 3), int(errors)))
    return TrialSet.from_records(records)


def write_synthetic(spec: SyntheticSpec, out_dir: str | Path, vs: ViewpointSet | None = None) -> Path:
    """Write ``trials.csv`` and the generating ``synth_spec.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials = generate_trials(spec, vs)
    path = out / "trials.csv"
    path.write_text(trials.to_csv())
    (out / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
