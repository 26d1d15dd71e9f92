import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from affordview.clustering import Manifold
from affordview.errors import DegenerateError, ValidationError
from affordview.geometry import Viewpoint
from affordview.stats import (
    GroupSummary,
    cohens_d,
    f_isf,
    f_sf,
    improvement,
    intersection_means,
    normalize_within_affordance,
    one_way_anova,
    relative_improvement,
    t_cdf,
    t_ppf,
    two_way_interaction_anova,
    welch_t_left,
)
from affordview.trials import PerformanceSample, TrialSet

from conftest import P, R, rec, study_shaped_design
from oracles import balanced_interaction_ss, pooled_t

REACH_BEST = GroupSummary(109, 0.51582, 0.25781)
REACH_WORST = GroupSummary(33, 0.093026, 0.65474)


def test_t_cdf_against_mpmath():
    for x, df in [(-3.6254, 64.3), (0.0, 5), (2.5, 1.5), (-10.0, 200), (1e-3, 3)]:
        # Independent oracle: numeric integration of the t density.
        dens = lambda u: mpmath.gamma((df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2)) * (
            1 + u**2 / df
        ) ** (-(df + 1) / 2)
        want = float(mpmath.quad(dens, [-mpmath.inf, 0, x])) if x > 0 else float(mpmath.quad(dens, [-mpmath.inf, x]))
        assert t_cdf(x, df) == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_f_sf_against_scipy():
    for f, d1, d2 in [(1.5, 1, 4), (1.8361, 86, 457), (0.2, 3, 30), (12.0, 2, 5)]:
        assert f_sf(f, d1, d2) == pytest.approx(sps.f.sf(f, d1, d2), rel=1e-10)


@given(st.floats(1e-6, 0.5), st.floats(1, 500))
@settings(max_examples=200, deadline=None)
def test_t_round_trip(p, df):
    assert t_cdf(t_ppf(p, df), df) == pytest.approx(p, abs=1e-8)


@given(st.floats(1e-6, 0.5), st.floats(1, 100), st.floats(1, 500))
@settings(max_examples=200, deadline=None)
def test_f_round_trip(p, d1, d2):
    assert f_sf(f_isf(p, d1, d2), d1, d2) == pytest.approx(p, abs=1e-8)


def test_welch_reachability_row():
    r = welch_t_left(REACH_BEST, REACH_WORST)
    assert r.statistic == pytest.approx(-3.6254, abs=1e-3)
    assert r.p_value == pytest.approx(4.5367e-4, rel=0.02)
    assert r.significant(0.05)


def test_welch_passability_row():
    r = welch_t_left(GroupSummary(34, 0.50487, 0.13714), GroupSummary(12, -0.49656, 0.84357))
    assert r.statistic == pytest.approx(-4.0933, abs=1e-3)


def test_welch_equal_and_degenerate():
    g = GroupSummary(10, 1.0, 0.5)
    r = welch_t_left(g, g)
    assert r.statistic == 0 and r.p_value == pytest.approx(0.5)
    with pytest.raises(DegenerateError):
        welch_t_left(GroupSummary(5, 1.0, 0.0), GroupSummary(5, 0.0, 0.0))
    with pytest.raises(ValidationError):
        welch_t_left(GroupSummary(1, 1.0, 0.0), g)


def test_welch_matches_scipy_on_raw_data():
    rng = np.random.default_rng(0)
    a, b = rng.normal(1, 1, 20), rng.normal(0, 2, 13)
    r = welch_t_left(GroupSummary.from_samples(a), GroupSummary.from_samples(b))
    ref = sps.ttest_ind(b, a, equal_var=False, alternative="less")
    assert r.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8)


def test_cohens_d_rows():
    assert cohens_d(REACH_BEST, REACH_WORST) == pytest.approx(1.0943, abs=1e-3)
    trav = cohens_d(GroupSummary(29, 0.25833, 0.2644), GroupSummary(14, -0.96995, 1.2145))
    assert trav == pytest.approx(1.7109, abs=1e-3)
    assert cohens_d(GroupSummary(5, 1.0, 1.0), GroupSummary(7, 1.0, 2.0)) == 0
    with pytest.raises(DegenerateError):
        cohens_d(GroupSummary(3, 1.0, 0.0), GroupSummary(3, 2.0, 0.0))


def test_one_way_examples():
    r = one_way_anova([[1, 2, 3], [2, 3, 4]])
    assert r.details["ss_between"] == pytest.approx(1.5)
    assert r.details["ss_within"] == pytest.approx(4.0)
    assert r.statistic == pytest.approx(1.5)
    assert r.df == (1, 4)
    assert one_way_anova([[1, 2, 3], [1, 2, 3]]).statistic == 0
    rng = np.random.default_rng(1)
    assert one_way_anova([rng.normal(size=109), rng.normal(size=33)]).df == (1, 140)


def test_one_way_matches_scipy():
    rng = np.random.default_rng(2)
    groups = [rng.normal(m, 1, n) for m, n in [(0, 5), (0.5, 9), (1, 4), (0.2, 12)]]
    r = one_way_anova(groups)
    ref = sps.f_oneway(*groups)
    assert r.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8)


def test_one_way_errors():
    with pytest.raises(ValidationError):
        one_way_anova([[1, 2]])
    with pytest.raises(ValidationError):
        one_way_anova([[1], []])
    with pytest.raises(DegenerateError):
        one_way_anova([[1, 1], [1, 1]])
    assert one_way_anova([[1, 1], [2, 2]]).statistic == math.inf


@pytest.mark.parametrize("seed", range(20))
def test_f_equals_t_squared(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 1, int(rng.integers(2, 30))).tolist()
    b = rng.normal(0.3, 1, int(rng.integers(2, 30))).tolist()
    assert one_way_anova([a, b]).statistic == pytest.approx(pooled_t(a, b) ** 2, rel=1e-9)


def test_two_way_additive_means_give_zero_f():
    y, fa, fb = [], [], []
    for i, j, m in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 2)]:
        for e in (-0.1, 0.1):
            y.append(m + e)
            fa.append(i)
            fb.append(j)
    r = two_way_interaction_anova(y, fa, fb)
    assert r.statistic == pytest.approx(0, abs=1e-10)
    assert r.df == (1, 4)


def test_two_way_textbook_2x2():
    cells = [[[4, 6], [8, 10]], [[6, 8], [16, 18]]]
    y, fa, fb = [], [], []
    for i in range(2):
        for j in range(2):
            for v in cells[i][j]:
                y.append(v)
                fa.append(i)
                fb.append(j)
    r = two_way_interaction_anova(y, fa, fb)
    # cell means 5, 9, 7, 17: interaction contrast (5 - 9 - 7 + 17) = 6, SS = n * 6^2 / 4 = 18
    assert r.details["ss_interaction"] == pytest.approx(18.0)
    assert r.details["ss_interaction"] == pytest.approx(balanced_interaction_ss(cells), abs=1e-8)
    assert r.details["rss_full"] == pytest.approx(8.0)


@pytest.mark.parametrize("seed", range(10))
def test_two_way_balanced_closed_form(seed):
    rng = np.random.default_rng(seed)
    a, b, n = int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 5))
    cells = [[rng.normal(size=n).tolist() for _ in range(b)] for _ in range(a)]
    y, fa, fb = [], [], []
    for i in range(a):
        for j in range(b):
            for v in cells[i][j]:
                y.append(v)
                fa.append(f"a{i}")
                fb.append(j)
    r = two_way_interaction_anova(y, fa, fb)
    assert r.details["ss_interaction"] == pytest.approx(balanced_interaction_ss(cells), abs=1e-8)
    assert r.df == ((a - 1) * (b - 1), a * b * (n - 1))


def test_two_way_empty_cell_df_pattern():
    rng = np.random.default_rng(3)
    fa, fb = study_shaped_design(rng)
    r = two_way_interaction_anova(rng.normal(size=fa.size), fa, fb)
    assert r.details["filled_cells"] == 119
    assert r.df == (86, 457)


def test_two_way_disconnected_design():
    fa = [0, 0, 1, 1]
    fb = [0, 0, 1, 1]
    with pytest.raises(DegenerateError, match="disconnected|interaction"):
        two_way_interaction_anova([1.0, 2.0, 3.0, 4.0], fa, fb)
    with pytest.raises(ValidationError):
        two_way_interaction_anova([1.0, 2.0], [0, 0], [0, 1])


def perf(aff, p):
    return PerformanceSample("1", "talon", aff, 1, 0.0, 0.0, p)


def test_normalize_within_affordance():
    assert normalize_within_affordance([perf(R, -1), perf(R, 1)]) == pytest.approx([-0.7071, 0.7071], abs=1e-4)
    rng = np.random.default_rng(0)
    samples = [perf(R, x) for x in rng.normal(5, 3, 10)] + [perf(P, x) for x in rng.normal(-2, 0.1, 7)]
    z = normalize_within_affordance(samples)
    assert np.mean(z[:10]) == pytest.approx(0, abs=1e-12)
    assert np.mean(z[10:]) == pytest.approx(0, abs=1e-12)
    assert np.array_equal(np.argsort(z[:10]), np.argsort([s.performance for s in samples[:10]]))
    with pytest.raises(DegenerateError):
        normalize_within_affordance([perf(R, 1), perf(R, 1)])


@pytest.mark.parametrize(
    "best, worst, pct",
    [(21.11, 24.58, 14), (20.53, 26.74, 23), (29.57, 48.84, 39), (23.47, 57.02, 59), (0.08, 0.613, 87), (0, 1.2, 100)],
)
def test_improvement_examples(best, worst, pct):
    assert round(100 * improvement(best, worst)) == pct


def test_improvement_edge_cases():
    assert improvement(0, 0) == 0
    assert improvement(1, 0) == -math.inf
    assert improvement(3.0, 3.0) == 0


def manifold(rank, members):
    return Manifold(R, rank, frozenset(members), 0.0, Viewpoint(0, 0.0, 0.0, 1.5), len(members) / 30, 0)


def trials_for(times):
    """``times`` maps subject -> viewpoint -> (time, errors)."""
    return TrialSet.from_records(
        rec(s, R, vid, t, e) for s, by_vid in times.items() for vid, (t, e) in by_vid.items()
    )


def test_intersection_uses_shared_subjects_only():
    best, worst = manifold(1, [1, 2]), manifold(2, [3])
    ts = trials_for(
        {
            1: {1: (10, 0), 2: (14, 0), 3: (20, 2)},
            2: {1: (8, 0), 3: (16, 1)},
            3: {1: (1, 0)},  # only in best: ignored
        }
    )
    b, w, n = intersection_means(best, worst, ts, "time")
    assert (b, w, n) == (pytest.approx(10.0), pytest.approx(18.0), 2)
    assert relative_improvement(best, worst, ts, "errors") == pytest.approx(1.0)
    assert relative_improvement(best, best, ts, "time") == 0


def test_intersection_empty_raises():
    ts = trials_for({1: {1: (10, 0)}, 2: {3: (12, 0)}})
    with pytest.raises(ValidationError):
        relative_improvement(manifold(1, [1]), manifold(2, [3]), ts, "time")


@given(st.floats(0.01, 100))
@settings(max_examples=50, deadline=None)
def test_improvement_scale_invariant(c):
    best, worst = manifold(1, [1, 2]), manifold(2, [3, 4])
    rng = np.random.default_rng(0)
    base = {s: {v: (float(rng.uniform(5, 50)), 0) for v in (1, 2, 3, 4)} for s in range(1, 6)}
    scaled = {s: {v: (t * c, e) for v, (t, e) in d.items()} for s, d in base.items()}
    a = relative_improvement(best, worst, trials_for(base), "time")
    b = relative_improvement(best, worst, trials_for(scaled), "time")
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)
