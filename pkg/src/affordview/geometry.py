"""Hemispherical work envelope, viewpoint lattice and great-circle helpers.

Angles follow a latitude-like convention: ``theta`` is the elevation above the
task's horizontal plane (0 on the horizon, pi/2 at the zenith) and ``phi`` is
the azimuth measured counter-clockwise from the front of the task
(pi/2 = left, pi = back, 3*pi/2 = right).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .errors import DegenerateError, ValidationError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

DEFAULT_RADIUS_M = 1.5
DEFAULT_TOP_THRESHOLD = math.pi / 3

# (count, elevation in degrees, azimuth offset in degrees) from horizon to top.
# 12/8/4 lateral points split 3/2/1 into each azimuth quadrant; the top ring
# sits above the default threshold. Nearest-neighbour spacing at r=1.5 m is
# 0.64-0.79 m.
_DEFAULT_RINGS = ((12, 0.0, 0.0), (8, 24.0, 22.5), (4, 40.0, 0.0), (6, 65.0, 30.0))


class CardinalDirection(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    FRONT = "front"
    BACK = "back"
    TOP = "top"

    @classmethod
    def parse(cls, label: str) -> "CardinalDirection":
        try:
            return cls(str(label).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown cardinal direction {label!r}") from None


@dataclass(frozen=True)
class Viewpoint:
    """A camera pose on the hemisphere.

    ``id`` is the lattice index (1-based). Poses that are not lattice members,
    such as manifold centroids, carry ``id=0``.
    """

    id: int
    theta: float
    phi: float
    radius: float

    def unit_vector(self) -> np.ndarray:
        ct = math.cos(self.theta)
        return np.array([ct * math.cos(self.phi), ct * math.sin(self.phi), math.sin(self.theta)])

    def to_dict(self) -> dict[str, float]:
        return {"theta": self.theta, "phi": self.phi, "r": self.radius}


@dataclass(frozen=True)
class ViewpointSet:
    viewpoints: tuple[Viewpoint, ...]
    radius: float
    groups: Mapping[int, CardinalDirection] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValidationError(f"radius must be positive, got {self.radius}")
        seen: set[int] = set()
        for vp in self.viewpoints:
            if vp.id in seen:
                raise ValidationError(f"duplicate viewpoint id={vp.id}")
            seen.add(vp.id)
            if vp.radius != self.radius:
                raise ValidationError(f"radius mismatch for id={vp.id}")
            if not 0.0 <= vp.theta <= HALF_PI:
                raise ValidationError(f"theta out of range, id={vp.id}")
        missing = seen - set(self.groups)
        if self.groups and missing:
            raise ValidationError(f"viewpoints without group: {sorted(missing)}")
        object.__setattr__(self, "_index", {vp.id: vp for vp in self.viewpoints})

    def __len__(self) -> int:
        return len(self.viewpoints)

    def __iter__(self) -> Iterator[Viewpoint]:
        return iter(self.viewpoints)

    def __contains__(self, vid: object) -> bool:
        return vid in self._index  # type: ignore[attr-defined]

    def __getitem__(self, vid: int) -> Viewpoint:
        try:
            return self._index[vid]  # type: ignore[attr-defined]
        except KeyError:
            raise ValidationError(f"unknown viewpoint id={vid}") from None

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(vp.id for vp in self.viewpoints)

    def members(self, direction: CardinalDirection) -> tuple[int, ...]:
        return tuple(vid for vid in self.ids if self.groups.get(vid) == direction)

    def to_dict(self) -> dict[str, Any]:
        return {
            "radius_m": self.radius,
            "viewpoints": [
                {
                    "id": vp.id,
                    "theta_rad": vp.theta,
                    "phi_rad": vp.phi,
                    "group": self.groups[vp.id].value if vp.id in self.groups else None,
                }
                for vp in self.viewpoints
            ],
        }


def classify_direction(theta: float, phi: float, top_threshold: float = DEFAULT_TOP_THRESHOLD) -> CardinalDirection:
    """Assign a pose to a cardinal group: top above the threshold, else by azimuth quadrant."""
    if theta > top_threshold:
        return CardinalDirection.TOP
    sector = int(((phi + math.pi / 4) % TWO_PI) // HALF_PI)
    return (
        CardinalDirection.FRONT,
        CardinalDirection.LEFT,
        CardinalDirection.BACK,
        CardinalDirection.RIGHT,
    )[sector]


def generate_default_viewpoints(
    radius: float = DEFAULT_RADIUS_M, top_threshold: float = DEFAULT_TOP_THRESHOLD
) -> ViewpointSet:
    """Build the deterministic 30-viewpoint ring lattice on a hemisphere of ``radius``."""
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    viewpoints = []
    groups = {}
    vid = 1
    for count, elev_deg, offset_deg in _DEFAULT_RINGS:
        theta = math.radians(elev_deg)
        for m in range(count):
            phi = math.radians(offset_deg + 360.0 * m / count) % TWO_PI
            viewpoints.append(Viewpoint(vid, theta, phi, radius))
            groups[vid] = classify_direction(theta, phi, top_threshold)
            vid += 1
    return ViewpointSet(tuple(viewpoints), radius, groups)


def load_viewpoints(source: str | Path | Mapping[str, Any], top_threshold: float = DEFAULT_TOP_THRESHOLD) -> ViewpointSet:
    """Read a viewpoint-set document (path or already-parsed mapping).

    Rows without a ``group`` are classified with :func:`classify_direction`.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read viewpoint document: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, Mapping) or "radius_m" not in doc or "viewpoints" not in doc:
        raise ValidationError("viewpoint document needs 'radius_m' and 'viewpoints'")
    try:
        radius = float(doc["radius_m"])
    except (TypeError, ValueError):
        raise ValidationError("radius_m must be a number") from None
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")

    viewpoints = []
    groups = {}
    seen: set[int] = set()
    for row, item in enumerate(doc["viewpoints"], start=1):
        try:
            vid = int(item["id"])
            theta = float(item["theta_rad"])
            phi = float(item["phi_rad"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed viewpoint entry: {exc}", row=row) from None
        if vid in seen:
            raise ValidationError(f"duplicate viewpoint id={vid}", row=row)
        if not (math.isfinite(theta) and 0.0 <= theta <= HALF_PI):
            raise ValidationError(f"theta out of range, id={vid}", row=row)
        if not math.isfinite(phi):
            raise ValidationError(f"phi not finite, id={vid}", row=row)
        seen.add(vid)
        phi %= TWO_PI
        viewpoints.append(Viewpoint(vid, theta, phi, radius))
        label = item.get("group")
        groups[vid] = CardinalDirection.parse(label) if label else classify_direction(theta, phi, top_threshold)
    if not viewpoints:
        raise ValidationError("viewpoint document lists no viewpoints")
    return ViewpointSet(tuple(viewpoints), radius, groups)


def _haversine_angle(theta_a: float, phi_a: float, theta_b: float, phi_b: float) -> float:
    xi = math.sin((theta_b - theta_a) / 2) ** 2 + math.cos(theta_a) * math.cos(theta_b) * math.sin((phi_b - phi_a) / 2) ** 2
    xi = min(max(xi, 0.0), 1.0)
    return 2.0 * math.atan2(math.sqrt(xi), math.sqrt(1.0 - xi))


def orthodromic_distance(a: Viewpoint, b: Viewpoint) -> float:
    """Great-circle arc length between two poses on the same hemisphere."""
    if a.radius != b.radius:
        raise ValidationError(f"radius mismatch: {a.radius} vs {b.radius}")
    return a.radius * _haversine_angle(a.theta, a.phi, b.theta, b.phi)


def distance_matrix(vs: ViewpointSet) -> np.ndarray:
    """Pairwise orthodromic distances in ``vs`` order."""
    theta = np.array([vp.theta for vp in vs])
    phi = np.array([vp.phi for vp in vs])
    xi = (
        np.sin((theta[None, :] - theta[:, None]) / 2) ** 2
        + np.cos(theta[:, None]) * np.cos(theta[None, :]) * np.sin((phi[None, :] - phi[:, None]) / 2) ** 2
    )
    xi = np.clip(xi, 0.0, 1.0)
    d = 2.0 * vs.radius * np.arctan2(np.sqrt(xi), np.sqrt(1.0 - xi))
    np.fill_diagonal(d, 0.0)
    return d


def manifold_centroid(member_ids: Iterable[int], vs: ViewpointSet) -> Viewpoint:
    """Spherical mean of the member poses, projected back onto the hemisphere."""
    ids = list(member_ids)
    if not ids:
        raise ValidationError("centroid of an empty manifold")
    if len(ids) == 1:
        vp = vs[ids[0]]
        return Viewpoint(0, vp.theta, vp.phi, vs.radius)
    mean = np.mean([vs[i].unit_vector() for i in ids], axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-9:
        raise DegenerateError(f"degenerate centroid: members {sorted(ids)} cancel out")
    x, y, z = mean / norm
    theta = max(math.asin(min(max(z, -1.0), 1.0)), 0.0)
    phi = math.atan2(y, x) % TWO_PI
    return Viewpoint(0, theta, phi, vs.radius)


def area_fraction(member_ids: Iterable[int], vs: ViewpointSet) -> float:
    """Share of the lattice covered by ``member_ids`` (member-count fraction)."""
    ids = set(member_ids)
    unknown = [i for i in ids if i not in vs]
    if unknown:
        raise ValidationError(f"unknown viewpoint ids {sorted(unknown)}")
    return len(ids) / len(vs)
