"""Task-level viewpoint advice, cardinal-direction rules and weight sensitivity."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import DEFAULT_K_MAX, Manifold, ManifoldSet, build_manifold_set
from .errors import AffordviewError, MissingModelError, ValidationError
from .geometry import CardinalDirection, Viewpoint, ViewpointSet, orthodromic_distance
from .trials import AFFORDANCES, Affordance, PerformanceSample, Weights
from .valuation import ViewpointValue, value_field

SWEEP_GRID = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)
RULE_FRACTION = 0.8

UNCHANGED = "unchanged"
CHANGED_BELOW_TOP2 = "changed below top-2"
CHANGED_TOP2 = "changed including top-2"
STRUCTURE_CHANGED = "structure changed"
BASELINE = "baseline"


@dataclass(frozen=True)
class TaskPlan:
    """Ordered (action label, affordance) pairs.

    Affordance tokens that are not one of the modeled four are kept as plain
    lowercase strings so that :func:`advise` can report them as missing models.
    """

    actions: tuple[tuple[str, Affordance | str], ...]

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValidationError("task plan has no actions")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TaskPlan":
        try:
            items = doc["actions"]
            actions = []
            for item in items:
                label = str(item["label"])
                token = str(item["affordance"]).strip().lower()
                try:
                    aff: Affordance | str = Affordance(token)
                except ValueError:
                    aff = token
                actions.append((label, aff))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed task plan: {exc}") from None
        return cls(tuple(actions))

    @classmethod
    def load(cls, path: str | Path) -> "TaskPlan":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read task plan: {exc}") from exc


@dataclass(frozen=True)
class AdviceStep:
    label: str
    affordance: Affordance
    ranked: tuple[tuple[int, float, float], ...]
    pose: Viewpoint
    stability: float
    reaches_ground: bool | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "affordance": self.affordance.value,
            "manifolds": [{"rank": r, "value": v, "area_fraction": a} for r, v, a in self.ranked],
            "pose": {"theta_rad": self.pose.theta, "phi_rad": self.pose.phi, "radius_m": self.pose.radius},
            "stability": self.stability,
            "reaches_ground": self.reaches_ground,
        }


@dataclass(frozen=True)
class Advice:
    steps: tuple[AdviceStep, ...]
    transfers: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"steps": [s.to_dict() for s in self.steps], "transfers_m": list(self.transfers)}

    def summary(self) -> str:
        lines = []
        for k, step in enumerate(self.steps):
            p = step.pose
            lines.append(
                f"{k + 1}. {step.label} [{step.affordance.title}]: centroid of manifold 1 at "
                f"theta={np.degrees(p.theta):.1f} deg, phi={np.degrees(p.phi):.1f} deg, "
                f"r={p.radius:g} m (covers {step.stability:.0%} of the hemisphere)"
            )
            if k < len(self.transfers):
                lines.append(f"   move {self.transfers[k]:.2f} m along the hemisphere")
        return "\n".join(lines)


def _touches_ground(mf: Manifold, vs: ViewpointSet) -> bool:
    return any(vs[vid].theta == 0.0 for vid in mf.members if vid in vs)


def advise(
    plan: TaskPlan, models: Mapping[Affordance, ManifoldSet], vs: ViewpointSet | None = None
) -> Advice:
    """Recommend the best-manifold centroid for each action of ``plan``."""
    steps = []
    for label, aff in plan.actions:
        mset = models.get(aff) if isinstance(aff, Affordance) else None
        if mset is None:
            name = aff.title if isinstance(aff, Affordance) else aff
            raise MissingModelError(f"no manifold model for affordance {name!r} (action {label!r})")
        best = mset.best
        steps.append(
            AdviceStep(
                label=label,
                affordance=mset.affordance,
                ranked=tuple((mf.rank, mf.value, mf.area_fraction) for mf in mset.manifolds),
                pose=best.centroid,
                stability=best.area_fraction,
                reaches_ground=_touches_ground(best, vs) if vs is not None else None,
            )
        )
    transfers = tuple(orthodromic_distance(a.pose, b.pose) for a, b in zip(steps, steps[1:]))
    return Advice(tuple(steps), transfers)


@dataclass(frozen=True)
class DirectionRule:
    affordance: Affordance
    direction_values: Mapping[CardinalDirection, float]
    threshold: float
    selected: tuple[CardinalDirection, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "affordance": self.affordance.value,
            "direction_values": {d.value: v for d, v in self.direction_values.items()},
            "threshold": self.threshold,
            "selected": [d.value for d in self.selected],
        }


def select_directions(direction_values: Mapping[CardinalDirection, float]) -> tuple[float, tuple[CardinalDirection, ...]]:
    """Directions whose value lies in the top fifth of the value range."""
    if not direction_values:
        raise ValidationError("no direction values to select from")
    lo = min(direction_values.values())
    hi = max(direction_values.values())
    threshold = lo + RULE_FRACTION * (hi - lo)
    selected = tuple(d for d, v in direction_values.items() if v >= threshold)
    if not selected:
        selected = (max(direction_values, key=direction_values.__getitem__),)
    return threshold, selected


def extract_cardinal_rules(values: Sequence[ViewpointValue], vs: ViewpointSet) -> DirectionRule:
    if not values:
        raise ValidationError("no viewpoint values")
    affordance = values[0].affordance
    value_of = {v.viewpoint: v.value for v in values}
    direction_values = {}
    for direction in CardinalDirection:
        members = [value_of[vid] for vid in vs.members(direction) if vid in value_of]
        if members:
            direction_values[direction] = float(np.mean(members))
    threshold, selected = select_directions(direction_values)
    return DirectionRule(affordance, direction_values, threshold, selected)


@dataclass(frozen=True)
class ManifoldDiff:
    verdict: str
    k: tuple[int, int]
    matches: tuple[tuple[int, int, int], ...]
    membership_equal: Mapping[int, bool]
    rank_order_agrees: bool
    moved: frozenset[int]
    top2_unchanged: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "k": list(self.k),
            "matches": [{"rank_a": a, "rank_b": b, "overlap": o} for a, b, o in self.matches],
            "membership_equal": {str(r): eq for r, eq in sorted(self.membership_equal.items())},
            "rank_order_agrees": self.rank_order_agrees,
            "moved": sorted(self.moved),
            "top2_unchanged": self.top2_unchanged,
        }


def compare_manifold_sets(a: ManifoldSet, b: ManifoldSet) -> ManifoldDiff:
    """Match clusters by maximum overlap and classify how ``b`` differs from ``a``."""
    if a.affordance != b.affordance:
        raise ValidationError("cannot compare manifold sets of different affordances")
    lattice_a = frozenset().union(*(mf.members for mf in a.manifolds))
    lattice_b = frozenset().union(*(mf.members for mf in b.manifolds))
    if lattice_a != lattice_b:
        raise ValidationError("manifold sets cover different viewpoint lattices")

    overlap = np.array([[len(ma.members & mb.members) for mb in b.manifolds] for ma in a.manifolds])
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    match_ab = {a.manifolds[r].rank: b.manifolds[c].rank for r, c in zip(rows, cols)}
    matches = tuple(
        (a.manifolds[r].rank, b.manifolds[c].rank, int(overlap[r, c])) for r, c in zip(rows, cols)
    )

    membership_equal = {
        ma.rank: ma.rank in match_ab and ma.members == b.by_rank(match_ab[ma.rank]).members for ma in a.manifolds
    }
    matched_ranks = sorted(match_ab)
    b_order = [match_ab[r] for r in matched_ranks]
    rank_order_agrees = b_order == sorted(b_order)

    rank_a = a.assignment()
    rank_b = b.assignment()
    moved = frozenset(vid for vid in lattice_a if match_ab.get(rank_a[vid]) != rank_b[vid])

    def _top2_same() -> bool:
        if a.k < 2 or b.k < 2:
            return a.k == b.k and a.best.members == b.best.members
        return all(a.by_rank(r).members == b.by_rank(r).members for r in (1, 2))

    top2_unchanged = _top2_same()
    if a.k != b.k:
        verdict = STRUCTURE_CHANGED
    elif all(membership_equal.values()) and all(ra == rb for ra, rb, _ in matches):
        verdict = UNCHANGED
    else:
        touched_a = {r for r, eq in membership_equal.items() if not eq} | {ra for ra, rb, _ in matches if ra != rb}
        touched_b = {match_ab[r] for r in touched_a if r in match_ab}
        verdict = CHANGED_TOP2 if (touched_a | touched_b) & {1, 2} else CHANGED_BELOW_TOP2
    return ManifoldDiff(verdict, (a.k, b.k), matches, membership_equal, rank_order_agrees, moved, top2_unchanged)


@dataclass(frozen=True)
class SensitivityReport:
    grid: tuple[float, ...]
    entries: Mapping[float, Mapping[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        return {f"{w_m:.1f}": dict(self.entries[w_m]) for w_m in self.grid}


def manifolds_for_weights(
    samples: Sequence[PerformanceSample],
    vs: ViewpointSet,
    w: Weights,
    affordance: Affordance,
    k_max: int = DEFAULT_K_MAX,
    impute: bool = False,
) -> ManifoldSet:
    values = value_field(samples, vs, w, affordance, impute=impute)
    return build_manifold_set(values, vs, samples, w, k_max)


def sensitivity_sweep(
    samples: Sequence[PerformanceSample],
    vs: ViewpointSet,
    base: Weights = Weights(),
    grid: Iterable[float] = SWEEP_GRID,
    k_max: int = DEFAULT_K_MAX,
    affordances: Iterable[Affordance] | None = None,
    impute: bool = False,
    map_fn: Callable = map,
) -> SensitivityReport:
    """Rebuild manifolds for each ``w_m`` in ``grid`` (``w_d = 1 - w_m``) and diff neighbours.

    ``map_fn`` lets the caller fan grid points out to a pool; results are
    assembled in grid order regardless.
    """
    grid = tuple(grid)
    present = {s.affordance for s in samples}
    affs = [a for a in (affordances or AFFORDANCES) if a in present]

    def _run(w_m: float) -> dict[Affordance, ManifoldSet | str]:
        w = Weights(base.w_t, base.w_e, w_m, round(1.0 - w_m, 12))
        out: dict[Affordance, ManifoldSet | str] = {}
        for aff in affs:
            try:
                out[aff] = manifolds_for_weights(samples, vs, w, aff, k_max, impute)
            except AffordviewError as exc:
                out[aff] = f"{type(exc).__name__}: {exc}"
        return out

    results = list(map_fn(_run, grid))
    entries: dict[float, dict[str, Any]] = {}
    for idx, (w_m, res) in enumerate(zip(grid, results)):
        entry: dict[str, Any] = {}
        for aff in affs:
            cur = res[aff]
            if isinstance(cur, str):
                entry[aff.value] = {"error": cur, "verdict": None}
                continue
            item: dict[str, Any] = {
                "k": cur.k,
                "manifolds": [{"rank": mf.rank, "value": mf.value, "members": sorted(mf.members)} for mf in cur.manifolds],
            }
            prev = results[idx - 1][aff] if idx > 0 else None
            if prev is None:
                item["verdict"] = BASELINE
                item["diff"] = None
            elif isinstance(prev, str):
                item["verdict"] = None
                item["diff"] = None
            else:
                diff = compare_manifold_sets(prev, cur)
                item["verdict"] = diff.verdict
                item["diff"] = diff.to_dict()
            entry[aff.value] = item
        entries[w_m] = entry
    return SensitivityReport(grid, entries)
