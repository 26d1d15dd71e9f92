"""Viewpoint manifolds: combined dissimilarity, average-linkage tree, count selection."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .geometry import Viewpoint, ViewpointSet, area_fraction, distance_matrix, manifold_centroid
from .trials import Affordance, PerformanceSample, Weights
from .valuation import SamplePoint, ViewpointValue, make_sample_points, weighted_value

DEFAULT_K_MAX = 10
# Relative gap below which two linkage heights count as tied.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric pairwise dissimilarities with zero diagonal, indexed by ``ids``."""

    ids: tuple[int, ...]
    entries: np.ndarray
    orthodromic: np.ndarray | None = None
    value_distance: np.ndarray | None = None

    def __post_init__(self) -> None:
        e = np.asarray(self.entries, dtype=float)
        n = len(self.ids)
        if e.shape != (n, n):
            raise ValidationError(f"matrix shape {e.shape} does not match {n} ids")
        if len(set(self.ids)) != n:
            raise ValidationError("duplicate ids in dissimilarity matrix")
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise ValidationError("dissimilarities must be finite and nonnegative")
        if not np.array_equal(e, e.T) or np.any(np.diag(e) != 0):
            raise ValidationError("dissimilarity matrix must be symmetric with zero diagonal")
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_array(cls, entries: np.ndarray, ids: Sequence[int] | None = None) -> "DissimilarityMatrix":
        entries = np.asarray(entries, dtype=float)
        if ids is None:
            ids = range(1, entries.shape[0] + 1)
        return cls(tuple(ids), entries)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    def index(self) -> dict[int, int]:
        return {vid: k for k, vid in enumerate(self.ids)}


def dissimilarity_matrix(points: Sequence[SamplePoint], vs: ViewpointSet) -> DissimilarityMatrix:
    """Combine great-circle distance and normalized-value difference in quadrature."""
    by_id = {p.viewpoint: p for p in points}
    if sorted(by_id) != sorted(vs.ids) or len(points) != len(vs):
        raise ValidationError("need exactly one sample point per lattice viewpoint")
    ortho = distance_matrix(vs)
    z = np.array([by_id[vid].norm_value for vid in vs.ids])
    value = np.abs(z[:, None] - z[None, :])
    entries = np.sqrt(ortho**2 + value**2)
    # Quadrature sum is symmetric analytically; enforce it bitwise.
    entries = np.triu(entries, 1)
    entries = entries + entries.T
    return DissimilarityMatrix(vs.ids, entries, ortho, value)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    new_id: int
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge list of an agglomerative tree.

    Cluster labels ``0..n-1`` are leaves in ``leaves`` order (``leaves`` holds
    viewpoint ids); merge ``s`` creates label ``n + s``.
    """

    leaves: tuple[int, ...]
    merges: tuple[Merge, ...]

    @property
    def n(self) -> int:
        return len(self.leaves)

    @property
    def is_monotone(self) -> bool:
        h = [m.height for m in self.merges]
        return all(b >= a for a, b in zip(h, h[1:]))

    def to_linkage(self) -> np.ndarray:
        """Tree in the ``(n-1, 4)`` linkage-matrix layout used by SciPy."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "left", "right", "height", "new_cluster", "size", "left_leaf_id", "right_leaf_id"])
        n = self.n
        for step, m in enumerate(self.merges):
            writer.writerow(
                [
                    step,
                    m.left,
                    m.right,
                    repr(m.height),
                    m.new_id,
                    m.size,
                    self.leaves[m.left] if m.left < n else "",
                    self.leaves[m.right] if m.right < n else "",
                ]
            )
        return buf.getvalue()


def upgma_tree(m: DissimilarityMatrix) -> Dendrogram:
    """Average-linkage (UPGMA) agglomeration.

    The closest pair under mean pairwise dissimilarity merges first. Heights
    within ``TIE_RTOL`` of the minimum are ties, resolved by the smallest
    ``(min member id, min member id)`` pair.
    """
    n = m.n
    if n < 2:
        raise ValidationError("UPGMA needs at least two points")
    d = m.entries.copy()
    active = list(range(n))
    size = [1] * n
    min_id = list(m.ids)
    label = list(range(n))
    merges = []
    for step in range(n - 1):
        idx = np.array(active)
        sub = d[np.ix_(idx, idx)]
        iu = np.triu_indices(len(idx), 1)
        heights = sub[iu]
        best = heights.min()
        tol = TIE_RTOL * max(1.0, abs(best))
        candidates = np.flatnonzero(heights <= best + tol)
        a, b = min(
            ((idx[iu[0][c]], idx[iu[1][c]]) for c in candidates),
            key=lambda p: tuple(sorted((min_id[p[0]], min_id[p[1]]))),
        )
        if min_id[b] < min_id[a]:
            a, b = b, a
        height = float(d[a, b])
        na, nb = size[a], size[b]
        merged = (na * d[a] + nb * d[b]) / (na + nb)
        d[a, :] = merged
        d[:, a] = merged
        d[a, a] = 0.0
        merges.append(Merge(label[a], label[b], height, n + step, na + nb))
        size[a] = na + nb
        min_id[a] = min(min_id[a], min_id[b])
        label[a] = n + step
        active.remove(b)
    return Dendrogram(m.ids, tuple(merges))


def cut_tree(t: Dendrogram, k: int) -> list[frozenset[int]]:
    """The ``k`` clusters left after undoing the last ``k - 1`` merges, ordered by smallest member id."""
    n = t.n
    if not 1 <= k <= n:
        raise ValidationError(f"cluster count k={k} outside [1, {n}]")
    members: dict[int, set[int]] = {i: {vid} for i, vid in enumerate(t.leaves)}
    for merge in t.merges[: n - k]:
        members[merge.new_id] = members.pop(merge.left) | members.pop(merge.right)
    return sorted((frozenset(s) for s in members.values()), key=min)


def _labels_for(m: DissimilarityMatrix, partition: Iterable[Iterable[int]]) -> np.ndarray:
    index = m.index()
    labels = np.full(m.n, -1)
    for c, cluster in enumerate(partition):
        cluster = list(cluster)
        if not cluster:
            raise ValidationError("partition contains an empty cluster")
        for vid in cluster:
            if vid not in index:
                raise ValidationError(f"partition references unknown id {vid}")
            if labels[index[vid]] >= 0:
                raise ValidationError(f"id {vid} appears in more than one cluster")
            labels[index[vid]] = c
    if np.any(labels < 0):
        raise ValidationError("partition does not cover every id")
    return labels


def calinski_harabasz(m: DissimilarityMatrix, partition: Iterable[Iterable[int]]) -> float:
    """Calinski-Harabasz ratio computed from squared pairwise dissimilarities.

    Within dispersion sums, per cluster, the squared dissimilarities over its
    ordered pairs divided by twice its size; the total dispersion does the same
    over all points. For Euclidean inputs this equals the classical
    between/within variance ratio. Returns ``inf`` when the within dispersion
    is zero.
    """
    labels = _labels_for(m, partition)
    n = m.n
    k = int(labels.max()) + 1
    if not 2 <= k <= n - 1:
        raise ValidationError(f"Calinski-Harabasz needs 2 <= k <= n-1, got k={k}, n={n}")
    d2 = m.entries**2
    total = d2.sum() / (2.0 * n)
    within = 0.0
    for c in range(k):
        sel = labels == c
        within += d2[np.ix_(sel, sel)].sum() / (2.0 * sel.sum())
    if within <= 0.0:
        return math.inf
    between = total - within
    return (between / (k - 1)) / (within / (n - k))


@dataclass(frozen=True)
class Manifold:
    affordance: Affordance
    rank: int
    members: frozenset[int]
    value: float
    centroid: Viewpoint
    area_fraction: float
    n_perf_samples: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "rank": self.rank,
            "value": self.value,
            "members": sorted(self.members),
            "centroid": self.centroid.to_dict(),
            "area_fraction": self.area_fraction,
            "n_perf_samples": self.n_perf_samples,
        }


@dataclass(frozen=True)
class ManifoldSet:
    affordance: Affordance
    manifolds: tuple[Manifold, ...]
    weights: Weights
    ch_scores: Mapping[int, float] = field(default_factory=dict)
    dendrogram: Dendrogram | None = field(default=None, compare=False)

    @property
    def k(self) -> int:
        return len(self.manifolds)

    @property
    def best(self) -> Manifold:
        return self.manifolds[0]

    def by_rank(self, rank: int) -> Manifold:
        return self.manifolds[rank - 1]

    def assignment(self) -> dict[int, int]:
        """Viewpoint id -> manifold rank."""
        return {vid: mf.rank for mf in self.manifolds for vid in mf.members}

    def to_dict(self) -> dict[str, Any]:
        return {
            "affordance": self.affordance.value,
            "k": self.k,
            "weights": self.weights.to_dict(),
            "ch_scores": {str(k): _finite_or_none(v) for k, v in sorted(self.ch_scores.items())},
            "manifolds": [mf.to_dict() for mf in self.manifolds],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ManifoldSet":
        try:
            affordance = Affordance.parse(doc["affordance"])
            weights = Weights(**doc["weights"]) if "weights" in doc else Weights()
            manifolds = []
            for item in doc["manifolds"]:
                c = item["centroid"]
                manifolds.append(
                    Manifold(
                        affordance=affordance,
                        rank=int(item["rank"]),
                        members=frozenset(int(v) for v in item["members"]),
                        value=float(item["value"]),
                        centroid=Viewpoint(0, float(c["theta"]), float(c["phi"]), float(c["r"])),
                        area_fraction=float(item["area_fraction"]),
                        n_perf_samples=int(item["n_perf_samples"]),
                    )
                )
            scores = {int(k): (math.inf if v is None else float(v)) for k, v in doc.get("ch_scores", {}).items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed manifold set: {exc}") from None
        manifolds.sort(key=lambda mf: mf.rank)
        if [mf.rank for mf in manifolds] != list(range(1, len(manifolds) + 1)):
            raise ValidationError(f"{affordance.title}: manifold ranks must be 1..k")
        seen: set[int] = set()
        for mf in manifolds:
            if not mf.members or seen & mf.members:
                raise ValidationError(f"{affordance.title}: manifolds must be non-empty and disjoint")
            seen |= mf.members
        return cls(affordance, tuple(manifolds), weights, scores)


def _finite_or_none(x: float) -> float | None:
    return x if math.isfinite(x) else None


def select_cluster_count(m: DissimilarityMatrix, tree: Dendrogram, k_max: int = DEFAULT_K_MAX) -> tuple[int, dict[int, float]]:
    """Cut count in ``2..min(k_max, n-1)`` maximizing Calinski-Harabasz; smallest k on ties."""
    if k_max < 2:
        raise ValidationError(f"k_max must be at least 2, got {k_max}")
    upper = min(k_max, m.n - 1)
    if upper < 2:
        raise ValidationError(f"need at least 3 viewpoints to choose a cluster count, got {m.n}")
    scores = {k: calinski_harabasz(m, cut_tree(tree, k)) for k in range(2, upper + 1)}
    best_k = max(scores, key=lambda k: (scores[k], -k))
    return best_k, scores


def build_manifold_set(
    values: Sequence[ViewpointValue],
    vs: ViewpointSet,
    samples: Iterable[PerformanceSample],
    w: Weights,
    k_max: int = DEFAULT_K_MAX,
) -> ManifoldSet:
    """Cluster one affordance's value field into ranked manifolds.

    Manifold value is ``w_m * mean - w_d * std`` of the member viewpoint values
    (std is 0 for singletons); rank 1 has the highest value.
    """
    if not values:
        raise ValidationError("no viewpoint values")
    affordance = values[0].affordance
    if any(v.affordance != affordance for v in values):
        raise ValidationError("values span more than one affordance")
    points = make_sample_points(values, vs)
    dm = dissimilarity_matrix(points, vs)
    tree = upgma_tree(dm)
    k, scores = select_cluster_count(dm, tree, k_max)

    value_of = {v.viewpoint: v.value for v in values}
    counts: dict[int, int] = {}
    for s in samples:
        if s.affordance == affordance:
            counts[s.viewpoint] = counts.get(s.viewpoint, 0) + 1

    scored = []
    for cluster in cut_tree(tree, k):
        member_values = [value_of[vid] for vid in sorted(cluster)]
        scored.append((weighted_value(member_values, w), cluster))
    scored.sort(key=lambda item: (-item[0], min(item[1])))

    manifolds = tuple(
        Manifold(
            affordance=affordance,
            rank=rank,
            members=cluster,
            value=value,
            centroid=manifold_centroid(sorted(cluster), vs),
            area_fraction=area_fraction(cluster, vs),
            n_perf_samples=sum(counts.get(vid, 0) for vid in cluster),
        )
        for rank, (value, cluster) in enumerate(scored, start=1)
    )
    return ManifoldSet(affordance, manifolds, w, scores, tree)
