import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from aircongest import cluster as cl
from aircongest.cluster import KMeansConfig, kmeans


def _two_clouds():
    rng = np.random.default_rng(0)
    a = rng.normal(0.0, 1.0, (10, 20))
    b = rng.normal(0.0, 1.0, (10, 20))
    b[:, 0] += 100.0
    return np.vstack([a, b]), np.repeat([0, 1], 10)


def test_separable_clouds_split_perfectly():
    x, truth = _two_clouds()
    res = kmeans(x, KMeansConfig(k=2, seed=3))
    assert adjusted_rand_score(truth, res.assignments) == 1.0
    expected = sum(((x[truth == c] - x[truth == c].mean(0)) ** 2).sum() for c in (0, 1))
    assert res.loss == pytest.approx(expected, rel=1e-12)
    assert sorted(res.cluster_sizes.tolist()) == [10, 10]


def test_k1_is_global_mean():
    x = np.random.default_rng(1).random((30, 5))
    res = kmeans(x, KMeansConfig(k=1))
    np.testing.assert_allclose(res.centroids[0], x.mean(0), atol=1e-12)
    assert res.loss == pytest.approx(((x - x.mean(0)) ** 2).sum(), rel=1e-12)
    assert set(res.assignments.tolist()) == {1}


def test_k_larger_than_samples():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), KMeansConfig(k=4))


def test_non_finite_rejected():
    x = np.ones((5, 2))
    x[2, 1] = np.nan
    with pytest.raises(ValueError):
        kmeans(x, KMeansConfig(k=2))


def test_config_validation():
    with pytest.raises(ValueError):
        KMeansConfig(k=0)
    with pytest.raises(ValueError):
        KMeansConfig(init="forgy")


def test_duplicate_points_do_not_crash():
    x = np.array([[0.0, 0.0]] * 6 + [[1.0, 1.0]] * 2)
    res = kmeans(x, KMeansConfig(k=3, seed=0))
    assert len(res.assignments) == 8
    assert all(1 <= a <= 3 for a in res.assignments)


def test_empty_cluster_repair_from_bad_start():
    # centroid 2 starts far away from every point -> empty after the first assignment
    x = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
    labels, centroids, trace, _, _ = cl.lloyd(x, np.array([[0.0], [5.0], [1000.0]]))
    assert np.bincount(labels, minlength=3).min() >= 1
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_seed_determinism_and_seed_sensitivity():
    x = np.random.default_rng(2).random((80, 6))
    a = kmeans(x, KMeansConfig(k=4, seed=5))
    b = kmeans(x, KMeansConfig(k=4, seed=5))
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.loss_trace == b.loss_trace


def test_random_init_fidelity_mode():
    x, truth = _two_clouds()
    res = kmeans(x, KMeansConfig(k=2, init="random", seed=1))
    assert adjusted_rand_score(truth, res.assignments) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 60), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31))
def test_lloyd_invariants(n, d, k, seed):
    k = min(k, n)
    x = np.random.default_rng(seed).normal(size=(n, d))
    res = kmeans(x, KMeansConfig(k=k, seed=seed, n_init=3))
    trace = res.loss_trace
    assert all(b <= a * (1 + 1e-12) for a, b in zip(trace, trace[1:]))
    labels = res.labels0
    for c in range(k):
        members = x[labels == c]
        assert len(members) > 0
        np.testing.assert_allclose(res.centroids[c], members.mean(0), atol=1e-9)
    if res.converged:
        d2 = cl.sq_distances(x, res.centroids)
        own = d2[np.arange(n), labels]
        assert (own <= d2.min(axis=1) + 1e-12).all()
    assert res.loss == pytest.approx(((x - res.centroids[labels]) ** 2).sum(), rel=1e-9)


def test_relabeling_does_not_change_quality():
    x, truth = _two_clouds()
    res = kmeans(x, KMeansConfig(k=2))
    swapped = 3 - res.assignments
    assert adjusted_rand_score(truth, swapped) == adjusted_rand_score(truth, res.assignments)


def test_centroid_distances():
    d = cl.centroid_distance_matrix(np.eye(3)[:2])
    assert d[0, 1] == pytest.approx(math.sqrt(2))
    assert cl.centroid_distance_matrix(np.ones((2, 4)))[0, 1] == 0.0
    x = np.random.default_rng(3).random((50, 20))
    d = cl.centroid_distance_matrix(kmeans(x, KMeansConfig(k=4)))
    assert np.array_equal(d, d.T) and (np.diag(d) == 0).all() and (d >= 0).all()


def test_pca_collinear():
    t = np.linspace(-3, 3, 50)
    proj = cl.pca_project(np.column_stack([t, t]), p=2)
    np.testing.assert_allclose(proj.components[:, 0], [1 / math.sqrt(2)] * 2, atol=1e-12)
    assert abs(proj.explained_variance[1]) < 1e-12
    assert proj.rank_deficient


def test_pca_isotropic_cloud():
    x = np.random.default_rng(4).standard_normal((10_000, 3))
    ev = cl.pca_project(x, p=3).explained_variance
    assert 0.9 <= ev.min() / ev.max() <= 1.1
    assert ((ev > 0.9) & (ev < 1.1)).all()


@pytest.mark.parametrize("p", [2, 3])
def test_pca_contract(p):
    rng = np.random.default_rng(p)
    x = rng.normal(size=(365, 20)) @ rng.normal(size=(20, 20))
    proj = cl.pca_project(x, p)
    np.testing.assert_allclose(proj.components.T @ proj.components, np.eye(p), atol=1e-9)
    assert (np.diff(proj.explained_variance) <= 0).all()
    assert (proj.explained_variance >= -1e-12).all()
    total = proj.coords.var(axis=0, ddof=1).sum()
    assert total == pytest.approx(proj.explained_variance.sum(), abs=1e-9 * max(1, total))
    largest = proj.components[np.abs(proj.components).argmax(axis=0), range(p)]
    assert (largest > 0).all()


def test_pca_bad_dims():
    with pytest.raises(ValueError):
        cl.pca_project(np.zeros((5, 3)), p=4)
    with pytest.raises(ValueError):
        cl.pca_project(np.zeros((1, 3)), p=2)


def test_cluster_csv_outputs(tmp_path):
    from datetime import date

    x, _ = _two_clouds()
    res = kmeans(x, KMeansConfig(k=2))
    days = [date(2023, 1, 1 + i) for i in range(20)]
    cl.write_assignments_csv(days, res, tmp_path / "a.csv")
    back = cl.read_assignments_csv(tmp_path / "a.csv")
    assert [back[d] for d in days] == res.assignments.tolist()
    cl.write_distance_csv(cl.centroid_distance_matrix(res), tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == ",C1,C2"
    cl.write_centroids_csv(res, [f"f{i}" for i in range(20)], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0].startswith("label,size,f0")
    cl.write_pca_csv(days, res, cl.pca_project(x, 2), tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "date,label,pc1,pc2"
