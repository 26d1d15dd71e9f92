import math

import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from sklearn.metrics import calinski_harabasz_score

from affordview.errors import ValidationError
from affordview.clustering import (
    DissimilarityMatrix,
    ManifoldSet,
    build_manifold_set,
    calinski_harabasz,
    cut_tree,
    dissimilarity_matrix,
    select_cluster_count,
    upgma_tree,
)
from affordview.geometry import load_viewpoints, orthodromic_distance
from affordview.trials import Weights, score_performance
from affordview.valuation import SamplePoint, ViewpointValue, make_sample_points, value_field

from conftest import R
from oracles import classical_ch, naive_upgma, tree_merges


def random_matrix(rng, n):
    x = rng.normal(size=(n, 3))
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    d = np.triu(d, 1)
    return d + d.T


def toy():
    d = np.array([[0, 1, 4], [1, 0, 5], [4, 5, 0]], dtype=float)
    return DissimilarityMatrix.from_array(d, ids=[1, 2, 3])


def test_matrix_validation():
    with pytest.raises(ValidationError):
        DissimilarityMatrix.from_array(np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValidationError):
        DissimilarityMatrix.from_array(np.array([[1, 1], [1, 0]]))
    with pytest.raises(ValidationError):
        DissimilarityMatrix.from_array(np.zeros((2, 2)), ids=[1, 1])


def test_dissimilarity_examples():
    vs = load_viewpoints(
        {
            "radius_m": 1.5,
            "viewpoints": [
                {"id": 1, "theta_rad": 0.0, "phi_rad": 0.0},
                {"id": 2, "theta_rad": 0.0, "phi_rad": 0.0 + 1e-300},
                {"id": 3, "theta_rad": 0.0, "phi_rad": math.pi},
            ],
        }
    )
    pts = [SamplePoint(1, 0.0, 0.0, 1.0), SamplePoint(2, 0.0, 0.0, -1.0), SamplePoint(3, 0.0, math.pi, 1.0)]
    m = dissimilarity_matrix(pts, vs)
    assert m.entries[0, 1] == pytest.approx(2.0)
    assert m.entries[0, 2] == pytest.approx(4.7124, abs=1e-4)
    assert m.entries[1, 2] == pytest.approx(math.hypot(orthodromic_distance(vs[2], vs[3]), 2.0))


def test_dissimilarity_on_lattice_is_symmetric(lattice):
    rng = np.random.default_rng(2)
    values = [ViewpointValue(R, vid, float(v), 1, 0.0, 0.0) for vid, v in zip(lattice.ids, rng.normal(size=30))]
    m = dissimilarity_matrix(make_sample_points(values, lattice), lattice)
    assert np.array_equal(m.entries, m.entries.T)
    assert np.all(np.diag(m.entries) == 0)
    assert m.n_pairs == 435
    assert len(set(m.entries[np.triu_indices(30, 1)])) == 435
    np.testing.assert_allclose(m.entries**2, m.orthodromic**2 + m.value_distance**2, atol=1e-12)


def test_upgma_toy():
    t = upgma_tree(toy())
    assert [(frozenset(a), frozenset(b), h) for a, b, h in tree_merges(t)] == [
        ({1}, {2}, 1.0),
        ({1, 2}, {3}, 4.5),
    ]
    assert cut_tree(t, 2) == [frozenset({1, 2}), frozenset({3})]


def test_upgma_equal_distances_use_id_order():
    n = 5
    d = np.ones((n, n)) - np.eye(n)
    t = upgma_tree(DissimilarityMatrix.from_array(d, ids=[10, 11, 12, 13, 14]))
    merges = tree_merges(t)
    assert merges[0][:2] == ({10}, {11})
    assert merges[1][:2] == ({10, 11}, {12})
    assert all(h == 1.0 for _, _, h in merges)


@pytest.mark.parametrize("seed", range(10))
def test_upgma_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    d = random_matrix(rng, 15)
    ids = list(range(1, 16))
    t = upgma_tree(DissimilarityMatrix.from_array(d, ids))
    got = tree_merges(t)
    want = naive_upgma(d.tolist(), ids)
    assert [(a, b) for a, b, _ in got] == [(a, b) for a, b, _ in want]
    assert [h for *_, h in got] == pytest.approx([h for *_, h in want], abs=1e-9)
    assert t.is_monotone


@pytest.mark.parametrize("seed", range(5))
def test_upgma_agrees_with_scipy_average_linkage(seed):
    rng = np.random.default_rng(100 + seed)
    d = random_matrix(rng, 30)
    t = upgma_tree(DissimilarityMatrix.from_array(d))
    ref = linkage(squareform(d, checks=False), method="average")
    np.testing.assert_allclose(t.to_linkage()[:, 2], ref[:, 2], atol=1e-9)
    for k in (2, 5, 9):
        ours = cut_tree(t, k)
        labels = fcluster(ref, k, criterion="maxclust")
        theirs = {frozenset(int(i + 1) for i in np.flatnonzero(labels == c)) for c in set(labels)}
        assert set(ours) == theirs


def test_cut_tree_partitions():
    rng = np.random.default_rng(7)
    t = upgma_tree(DissimilarityMatrix.from_array(random_matrix(rng, 12)))
    for k in range(1, 13):
        parts = cut_tree(t, k)
        assert len(parts) == k
        assert sorted(v for p in parts for v in p) == list(range(1, 13))
    assert all(len(p) == 1 for p in cut_tree(t, 12))
    with pytest.raises(ValidationError):
        cut_tree(t, 0)
    with pytest.raises(ValidationError):
        cut_tree(t, 13)


@pytest.mark.parametrize("seed", range(10))
def test_ch_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 50))
    x = rng.normal(size=(n, 2))
    k = int(rng.integers(2, min(6, n - 1) + 1))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    m = DissimilarityMatrix.from_array(d, ids=range(n))
    parts = [[i for i in range(n) if labels[i] == c] for c in range(k)]
    ours = calinski_harabasz(m, parts)
    assert ours == pytest.approx(calinski_harabasz_score(x, labels), rel=1e-9)
    assert ours == pytest.approx(classical_ch(x.tolist(), labels.tolist()), rel=1e-9)


def test_ch_degenerate_and_range():
    d = np.array([[0, 0, 3], [0, 0, 3], [3, 3, 0]], dtype=float)
    m = DissimilarityMatrix.from_array(d, ids=[1, 2, 3])
    assert calinski_harabasz(m, [[1, 2], [3]]) == math.inf
    with pytest.raises(ValidationError):
        calinski_harabasz(m, [[1, 2, 3]])
    with pytest.raises(ValidationError):
        calinski_harabasz(m, [[1], [2]])


def test_ch_prefers_planted_two_clusters():
    rng = np.random.default_rng(4)
    x = np.concatenate([rng.normal(0, 0.01, size=(10, 2)), rng.normal(100, 0.01, size=(10, 2))])
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    m = DissimilarityMatrix.from_array(d)
    k, scores = select_cluster_count(m, upgma_tree(m), 10)
    assert k == 2
    assert all(scores[2] > scores[j] for j in range(3, 11))


def _manifolds(trials, lattice, w=Weights()):
    samples = score_performance(trials, w)
    values = value_field(samples, lattice, w, R)
    return build_manifold_set(values, lattice, samples, w), values, samples


def test_manifold_set_invariants(synthetic_trials, lattice):
    ms, values, samples = _manifolds(synthetic_trials, lattice)
    assert 2 <= ms.k <= 10
    assert sorted(v for mf in ms.manifolds for v in mf.members) == list(lattice.ids)
    vals = [mf.value for mf in ms.manifolds]
    assert vals == sorted(vals, reverse=True)
    assert [mf.rank for mf in ms.manifolds] == list(range(1, ms.k + 1))
    assert ms.best.value == max(vals)
    assert sum(mf.n_perf_samples for mf in ms.manifolds) == sum(1 for s in samples if s.affordance == R)
    assert sum(mf.area_fraction for mf in ms.manifolds) == pytest.approx(1.0)
    assert ms.k == max(ms.ch_scores, key=lambda k: (ms.ch_scores[k], -k))


def test_manifold_value_with_zero_dispersion_weight(synthetic_trials, lattice):
    w = Weights(0.4, 0.6, 1.0, 0.0)
    ms, values, _ = _manifolds(synthetic_trials, lattice, w)
    value_of = {v.viewpoint: v.value for v in values}
    for mf in ms.manifolds:
        assert mf.value == pytest.approx(np.mean([value_of[v] for v in mf.members]), abs=1e-12)


def test_manifold_set_json_round_trip(synthetic_trials, lattice):
    ms, _, _ = _manifolds(synthetic_trials, lattice)
    again = ManifoldSet.from_dict(ms.to_dict())
    assert again == ms
    doc = ms.to_dict()
    assert set(doc) >= {"affordance", "k", "manifolds"}
    assert set(doc["manifolds"][0]) >= {"rank", "value", "members", "centroid", "area_fraction", "n_perf_samples"}
    assert set(doc["manifolds"][0]["centroid"]) == {"theta", "phi", "r"}


def test_dendrogram_csv(synthetic_trials, lattice):
    ms, _, _ = _manifolds(synthetic_trials, lattice)
    rows = ms.dendrogram.to_csv().splitlines()
    assert rows[0].startswith("step,left,right,height")
    assert len(rows) == 30
