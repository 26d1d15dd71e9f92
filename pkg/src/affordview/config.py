"""Pipeline configuration; defaults are the study's published constants."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ValidationError
from .geometry import DEFAULT_RADIUS_M, DEFAULT_TOP_THRESHOLD, ViewpointSet, generate_default_viewpoints, load_viewpoints
from .trials import MAD_SCALE, MAD_THRESHOLD, Weights

DEFAULT_K_MAX = 10
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class PipelineConfig:
    weights: Weights = field(default_factory=Weights)
    radius_m: float = DEFAULT_RADIUS_M
    mad_threshold: float = MAD_THRESHOLD
    mad_scale: float = MAD_SCALE
    k_max: int = DEFAULT_K_MAX
    alpha: float = DEFAULT_ALPHA
    viewpoints: str | None = None
    top_threshold: float = DEFAULT_TOP_THRESHOLD
    impute: bool = False
    seed: int = 0
    # Execution detail only; never written to reports.
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.radius_m > 0:
            raise ValidationError(f"radius_m must be positive, got {self.radius_m}")
        if not (math.isfinite(self.mad_threshold) and self.mad_threshold > 0):
            raise ValidationError("mad_threshold must be positive")
        if not (math.isfinite(self.mad_scale) and self.mad_scale > 0):
            raise ValidationError("mad_scale must be positive")
        if int(self.k_max) != self.k_max or self.k_max < 2:
            raise ValidationError(f"k_max must be an integer >= 2, got {self.k_max}")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 <= self.top_threshold <= math.pi / 2:
            raise ValidationError("top_threshold must lie in [0, pi/2]")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PipelineConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        w = doc.pop("weights", None)
        try:
            if isinstance(w, str):
                doc["weights"] = Weights.parse(w)
            elif isinstance(w, Mapping):
                doc["weights"] = Weights(**w)
            elif isinstance(w, (list, tuple)):
                doc["weights"] = Weights(*w)
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(f"malformed config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        if not isinstance(doc, Mapping):
            raise ValidationError("config document must be a JSON object")
        return cls.from_dict(doc)

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out.pop("workers")
        return out

    def viewpoint_set(self) -> ViewpointSet:
        if self.viewpoints:
            vs = load_viewpoints(self.viewpoints, self.top_threshold)
            if not math.isclose(vs.radius, self.radius_m) and self.radius_m != DEFAULT_RADIUS_M:
                raise ValidationError(f"viewpoint file radius {vs.radius} disagrees with radius_m {self.radius_m}")
            return vs
        return generate_default_viewpoints(self.radius_m, self.top_threshold)
