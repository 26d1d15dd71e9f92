"""Validation battery: ANOVAs, left-tailed Welch test, Cohen's d, relative improvement."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy import special

from .clustering import Manifold, ManifoldSet
from .errors import AffordviewError, DegenerateError, ValidationError
from .trials import AFFORDANCES, Affordance, PerformanceSample, TrialSet, subject_sort_key

DEFAULT_ALPHA = 0.05


# -- distributions ---------------------------------------------------------

def t_cdf(x: float, df: float) -> float:
    """Student t CDF through the regularized incomplete beta function."""
    if not df > 0:
        raise ValidationError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(x):
        return 0.0 if x < 0 else 1.0
    tail = 0.5 * float(special.betainc(0.5 * df, 0.5, df / (df + x * x)))
    return tail if x < 0 else 1.0 - tail


def t_ppf(p: float, df: float) -> float:
    """Inverse of :func:`t_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"probability must lie in (0, 1), got {p}")
    lower = min(p, 1.0 - p)
    x = float(special.betaincinv(0.5 * df, 0.5, 2.0 * lower))
    t = math.sqrt(df * (1.0 - x) / x) if x > 0 else math.inf
    return -t if p < 0.5 else t


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper-tail probability of the F distribution."""
    if not (df1 > 0 and df2 > 0):
        raise ValidationError(f"degrees of freedom must be positive, got ({df1}, {df2})")
    if math.isinf(f):
        return 0.0
    if f <= 0:
        return 1.0
    return float(special.betainc(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f)))


def f_isf(p: float, df1: float, df2: float) -> float:
    """Inverse of :func:`f_sf`."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"probability must lie in (0, 1), got {p}")
    x = float(special.betaincinv(0.5 * df2, 0.5 * df1, p))
    return df2 * (1.0 - x) / (df1 * x)


# -- result types ----------------------------------------------------------

@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    std: float

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "GroupSummary":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise ValidationError("cannot summarize an empty group")
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return cls(int(arr.size), float(arr.mean()), std)

    def to_dict(self) -> dict[str, float]:
        return {"n": self.n, "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class TestResult:
    kind: str
    statistic: float
    df: float | tuple[float, float]
    p_value: float
    details: Mapping[str, float] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def significant(self, alpha: float = DEFAULT_ALPHA) -> bool:
        return self.p_value < alpha

    def to_dict(self, alpha: float = DEFAULT_ALPHA) -> dict[str, Any]:
        df = list(self.df) if isinstance(self.df, tuple) else self.df
        return {
            "kind": self.kind,
            "statistic": _json_float(self.statistic),
            "df": df,
            "p_value": self.p_value,
            "significant": self.significant(alpha),
            **{k: _json_float(v) for k, v in self.details.items()},
        }


def _json_float(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


# -- two-sample ------------------------------------------------------------

def welch_t_left(best: GroupSummary, worst: GroupSummary) -> TestResult:
    """Left-tailed unequal-variance test that ``worst`` has a lower mean than ``best``.

    The statistic is ``(worst.mean - best.mean) / se``, so a negative value
    supports the hypothesis; df follows Welch-Satterthwaite.
    """
    if best.n < 2 or worst.n < 2:
        raise ValidationError(f"Welch test needs n >= 2 per group, got {best.n} and {worst.n}")
    va = best.std**2 / best.n
    vb = worst.std**2 / worst.n
    if va + vb <= 0:
        raise DegenerateError("Welch test undefined: both groups have zero variance")
    t = (worst.mean - best.mean) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (best.n - 1) + vb**2 / (worst.n - 1))
    return TestResult("welch_t_left", t, df, t_cdf(t, df))


def cohens_d(a: GroupSummary, b: GroupSummary) -> float:
    """Absolute mean difference over the pooled sample standard deviation."""
    if a.n + b.n < 3:
        raise ValidationError("Cohen's d needs at least three observations")
    pooled = math.sqrt(((a.n - 1) * a.std**2 + (b.n - 1) * b.std**2) / (a.n + b.n - 2))
    if pooled == 0:
        raise DegenerateError("Cohen's d undefined: pooled standard deviation is zero")
    return abs(a.mean - b.mean) / pooled


# -- ANOVA -----------------------------------------------------------------

def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    """Unbalanced one-way ANOVA with ``(k - 1, N - k)`` degrees of freedom."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    k = len(arrays)
    if k < 2:
        raise ValidationError("one-way ANOVA needs at least two groups")
    if any(a.size == 0 for a in arrays):
        raise ValidationError("one-way ANOVA groups must be non-empty")
    n = sum(a.size for a in arrays)
    if n <= k:
        raise ValidationError(f"one-way ANOVA needs more observations ({n}) than groups ({k})")
    grand = np.concatenate(arrays).mean()
    ssb = float(sum(a.size * (a.mean() - grand) ** 2 for a in arrays))
    ssw = float(sum(((a - a.mean()) ** 2).sum() for a in arrays))
    df1, df2 = k - 1, n - k
    if ssw == 0:
        if ssb == 0:
            raise DegenerateError("F undefined: no variation within or between groups")
        f = math.inf
    else:
        f = (ssb / df1) / (ssw / df2)
    return TestResult("one_way_anova", f, (df1, df2), f_sf(f, df1, df2), {"ss_between": ssb, "ss_within": ssw})


def _dummies(codes: np.ndarray, n_levels: int) -> np.ndarray:
    out = np.zeros((codes.size, n_levels))
    out[np.arange(codes.size), codes] = 1.0
    return out


def _rss(x: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    return float(resid @ resid), int(rank)


def _disconnected_level(cells: set[tuple[int, int]], a_levels: list, b_levels: list) -> str | None:
    """Name a level outside the connected component of the first factor-A level, if any."""
    adj: dict[tuple[str, int], set[tuple[str, int]]] = defaultdict(set)
    for i, j in cells:
        adj[("a", i)].add(("b", j))
        adj[("b", j)].add(("a", i))
    start = ("a", 0)
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    for i, level in enumerate(a_levels):
        if ("a", i) not in seen:
            return f"factor A level {level!r}"
    for j, level in enumerate(b_levels):
        if ("b", j) not in seen:
            return f"factor B level {level!r}"
    return None


def two_way_interaction_anova(
    values: Sequence[float], factor_a: Sequence[Hashable], factor_b: Sequence[Hashable]
) -> TestResult:
    """Interaction F test for an unbalanced two-factor design.

    The interaction sum of squares is the residual difference between the
    additive main-effects model and the full cell-means model; empty cells
    reduce the interaction degrees of freedom.
    """
    y = np.asarray(values, dtype=float)
    if not (y.size == len(factor_a) == len(factor_b)):
        raise ValidationError("response and factor columns differ in length")
    a_levels = sorted(set(factor_a), key=str)
    b_levels = sorted(set(factor_b), key=str)
    if len(a_levels) < 2 or len(b_levels) < 2:
        raise ValidationError("two-way ANOVA needs at least two levels per factor")
    a_codes = np.array([a_levels.index(v) for v in factor_a])
    b_index = {v: j for j, v in enumerate(b_levels)}
    b_codes = np.array([b_index[v] for v in factor_b])
    cells = sorted(set(zip(a_codes.tolist(), b_codes.tolist())))
    disconnected = _disconnected_level(set(cells), a_levels, b_levels)
    if disconnected:
        raise DegenerateError(f"main effects not estimable: {disconnected} is disconnected from the design")

    n = y.size
    additive = np.column_stack(
        [np.ones(n), _dummies(a_codes, len(a_levels))[:, 1:], _dummies(b_codes, len(b_levels))[:, 1:]]
    )
    cell_index = {c: k for k, c in enumerate(cells)}
    full = _dummies(np.array([cell_index[c] for c in zip(a_codes.tolist(), b_codes.tolist())]), len(cells))

    rss_add, rank_add = _rss(additive, y)
    rss_full, rank_full = _rss(full, y)
    df_int = rank_full - rank_add
    df_err = n - rank_full
    if df_int <= 0:
        raise DegenerateError("no degrees of freedom for the interaction term")
    if df_err <= 0:
        raise DegenerateError("no residual degrees of freedom: every cell has a single observation")
    ss_int = max(rss_add - rss_full, 0.0)
    if rss_full == 0:
        if ss_int == 0:
            raise DegenerateError("F undefined: perfect fit with no interaction")
        f = math.inf
    else:
        f = (ss_int / df_int) / (rss_full / df_err)
    return TestResult(
        "two_way_interaction",
        f,
        (df_int, df_err),
        f_sf(f, df_int, df_err),
        {"ss_interaction": ss_int, "rss_full": rss_full, "filled_cells": len(cells)},
    )


def normalize_within_affordance(samples: Sequence[PerformanceSample]) -> list[float]:
    """Z-score each performance sample against all samples of its affordance."""
    by_aff: dict[Affordance, list[int]] = defaultdict(list)
    for k, s in enumerate(samples):
        by_aff[s.affordance].append(k)
    out = [0.0] * len(samples)
    for aff, idxs in by_aff.items():
        perf = np.array([samples[k].performance for k in idxs])
        std = perf.std(ddof=1) if perf.size > 1 else 0.0
        if not std > 0:
            raise DegenerateError(f"{aff.title}: zero spread in performance")
        z = (perf - perf.mean()) / std
        for k, v in zip(idxs, z):
            out[k] = float(v)
    return out


# -- relative improvement --------------------------------------------------

def improvement(best_mean: float, worst_mean: float) -> float:
    """Relative reduction of ``worst_mean`` achieved by ``best_mean``."""
    if worst_mean == 0:
        return 0.0 if best_mean == 0 else -math.inf
    return (worst_mean - best_mean) / worst_mean


def intersection_means(
    best: Manifold, worst: Manifold, trials: TrialSet, metric: str
) -> tuple[float, float, int]:
    """Mean of per-subject manifold means over subjects present in both manifolds.

    Returns ``(best_side, worst_side, n_subjects)``.
    """
    if metric not in ("time", "errors"):
        raise ValidationError(f"metric must be 'time' or 'errors', got {metric!r}")
    if best.affordance != worst.affordance:
        raise ValidationError("manifolds belong to different affordances")
    per_subject: dict[str, dict[str, list[float]]] = defaultdict(lambda: {"best": [], "worst": []})
    for r in trials:
        if r.affordance != best.affordance:
            continue
        value = r.time if metric == "time" else float(r.errors)
        if r.viewpoint in best.members:
            per_subject[r.subject]["best"].append(value)
        if r.viewpoint in worst.members:
            per_subject[r.subject]["worst"].append(value)
    shared = sorted((s for s, d in per_subject.items() if d["best"] and d["worst"]), key=subject_sort_key)
    if not shared:
        raise ValidationError(
            f"{best.affordance.title}: no subject has trials in both manifold {best.rank} and {worst.rank}"
        )
    best_side = float(np.mean([np.mean(per_subject[s]["best"]) for s in shared]))
    worst_side = float(np.mean([np.mean(per_subject[s]["worst"]) for s in shared]))
    return best_side, worst_side, len(shared)


def relative_improvement(best: Manifold, worst: Manifold, trials: TrialSet, metric: str) -> float:
    best_side, worst_side, _ = intersection_means(best, worst, trials, metric)
    return improvement(best_side, worst_side)


# -- report ----------------------------------------------------------------

@dataclass(frozen=True)
class StatsReport:
    alpha: float
    manifold_anova: Mapping[str, Any]
    affordance_viewpoint_interaction: Mapping[str, Any]
    robot_viewpoint_interaction: Mapping[str, Any]
    best_vs_worst: Mapping[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "manifold_anova": dict(self.manifold_anova),
            "affordance_viewpoint_interaction": dict(self.affordance_viewpoint_interaction),
            "robot_viewpoint_interaction": dict(self.robot_viewpoint_interaction),
            "best_vs_worst": dict(self.best_vs_worst),
        }


def _guard(fn: Callable[[], dict[str, Any]]) -> dict[str, Any]:
    try:
        return fn()
    except AffordviewError as exc:
        return {"error": str(exc), "error_kind": type(exc).__name__}


def _manifold_groups(mset: ManifoldSet, samples: Sequence[PerformanceSample]) -> dict[int, list[float]]:
    rank_of = mset.assignment()
    groups: dict[int, list[float]] = {mf.rank: [] for mf in mset.manifolds}
    for s in samples:
        if s.affordance == mset.affordance and s.viewpoint in rank_of:
            groups[rank_of[s.viewpoint]].append(s.performance)
    return groups


def _manifold_anova(mset: ManifoldSet, samples: Sequence[PerformanceSample], alpha: float) -> dict[str, Any]:
    groups = _manifold_groups(mset, samples)
    filled = {rank: g for rank, g in groups.items() if g}
    result = one_way_anova([filled[r] for r in sorted(filled)])
    return {
        "number_of_manifolds": mset.k,
        "manifolds": [
            {
                "rank": rank,
                "number_of_samples": len(groups[rank]),
                "performance_mean": float(np.mean(groups[rank])) if groups[rank] else None,
            }
            for rank in sorted(groups)
        ],
        "empty_manifolds": sorted(set(groups) - set(filled)),
        **result.to_dict(alpha),
    }


def _best_vs_worst(
    mset: ManifoldSet, samples: Sequence[PerformanceSample], trials: TrialSet, alpha: float
) -> dict[str, Any]:
    groups = _manifold_groups(mset, samples)
    best = mset.best
    subjects_in: dict[int, set[str]] = defaultdict(set)
    rank_of = mset.assignment()
    for r in trials:
        if r.affordance == mset.affordance and r.viewpoint in rank_of:
            subjects_in[rank_of[r.viewpoint]].add(r.subject)

    skipped = []
    worst = mset.manifolds[-1]
    while worst.rank > 1:
        if len(groups[worst.rank]) <= 1:
            skipped.append({"rank": worst.rank, "reason": f"{len(groups[worst.rank])} performance sample(s)"})
        elif not (subjects_in[best.rank] & subjects_in[worst.rank]):
            skipped.append({"rank": worst.rank, "reason": "no subjects shared with the best manifold"})
        else:
            break
        worst = mset.by_rank(worst.rank - 1)
    if worst.rank == 1:
        raise ValidationError(f"{mset.affordance.title}: no manifold is comparable with the best one")

    best_summary = GroupSummary.from_samples(groups[best.rank])
    worst_summary = GroupSummary.from_samples(groups[worst.rank])
    out: dict[str, Any] = {
        "number_of_manifolds": mset.k,
        "best": {"rank": best.rank, "manifold_value": best.value, **_table_summary(best_summary)},
        "worst": {"rank": worst.rank, "manifold_value": worst.value, **_table_summary(worst_summary)},
        "substituted": bool(skipped),
        "skipped_worse_manifolds": skipped,
    }
    out["t_test"] = _guard(lambda: welch_t_left(best_summary, worst_summary).to_dict(alpha))
    out["cohens_d"] = _guard(lambda: {"value": cohens_d(best_summary, worst_summary)})
    for metric in ("time", "errors"):
        def _one(metric: str = metric) -> dict[str, Any]:
            b, w, n = intersection_means(best, worst, trials, metric)
            return {"best": b, "worst": w, "n_subjects": n, "improvement": _json_float(improvement(b, w))}

        out[metric] = _guard(_one)
    return out


def _table_summary(s: GroupSummary) -> dict[str, float]:
    return {"number_of_samples": s.n, "performance_mean": s.mean, "performance_std": s.std}


def validate_model(
    msets: Mapping[Affordance, ManifoldSet],
    samples: Sequence[PerformanceSample],
    trials: TrialSet,
    alpha: float = DEFAULT_ALPHA,
) -> StatsReport:
    """Run the whole battery; a failing test is recorded in place and does not abort the report."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    ordered = [a for a in AFFORDANCES if a in msets]
    manifold_anova = {a.value: _guard(lambda a=a: _manifold_anova(msets[a], samples, alpha)) for a in ordered}
    best_vs_worst = {a.value: _guard(lambda a=a: _best_vs_worst(msets[a], samples, trials, alpha)) for a in ordered}

    def _interaction(factor: Callable[[PerformanceSample], Hashable]) -> dict[str, Any]:
        response = normalize_within_affordance(samples)
        return two_way_interaction_anova(response, [factor(s) for s in samples], [s.viewpoint for s in samples]).to_dict(alpha)

    return StatsReport(
        alpha=alpha,
        manifold_anova=manifold_anova,
        affordance_viewpoint_interaction=_guard(lambda: _interaction(lambda s: s.affordance.value)),
        robot_viewpoint_interaction=_guard(lambda: _interaction(lambda s: s.robot)),
        best_vs_worst=best_vs_worst,
    )
