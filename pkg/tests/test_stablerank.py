import math

import numpy as np
import pytest

from toporobust.metric import INF, diagonal_distance, wasserstein
from toporobust.stablerank import (
    Reparameterization,
    density_f,
    evaluate_F,
    lipschitz_bound,
    stable_rank_point_gradient,
    stable_rank_vector,
    suggested_dimension,
    vectorize_dataset,
)

MIXTURE = Reparameterization.gaussian_mixture([(1.0, 0.0, 1.0), (0.5, 2.0, 0.5), (0.2, 5.0, 2.0)])


def random_diagram(rng, max_points=5, scale=10.0):
    k = int(rng.integers(0, max_points + 1))
    births = rng.random(k) * scale
    gaps = rng.random(k) * scale
    return np.column_stack([births, births + gaps]) if k else np.empty((0, 2))


# ------------------------------------------------------------------- F


def test_identity_F():
    rep = Reparameterization.identity()
    assert evaluate_F(rep, 3.7) == 3.7
    assert evaluate_F(rep, 0.0) == 0.0
    assert lipschitz_bound(rep) == 1.0


def test_mixture_F_basics():
    rep = Reparameterization.gaussian_mixture([(1.0, 0.0, 1.0)])
    assert evaluate_F(rep, 0.0) == 0.0
    # half of a unit Gaussian centered at 0 lies above 0
    assert evaluate_F(rep, 1e9) == pytest.approx(0.5, abs=1e-12)
    assert lipschitz_bound(rep) == pytest.approx(1.0 / math.sqrt(2 * math.pi))


def test_mixture_F_monotone_and_bounded_slope():
    ts = np.linspace(0.0, 12.0, 400)
    vals = evaluate_F(MIXTURE, ts)
    assert np.all(np.diff(vals) > 0)
    slopes = np.diff(vals) / np.diff(ts)
    assert np.all(slopes <= lipschitz_bound(MIXTURE) + 1e-12)
    dens = density_f(MIXTURE, ts)
    assert np.all(dens > 0)
    assert dens.max() <= lipschitz_bound(MIXTURE) + 1e-12


def test_two_component_bound_sums_component_maxima():
    rep = Reparameterization.gaussian_mixture([(1.0, 0.0, 1.0), (1.0, 3.0, 0.5)])
    expected = 1.0 / math.sqrt(2 * math.pi) + 2.0 / math.sqrt(2 * math.pi)
    assert lipschitz_bound(rep) == pytest.approx(expected)


def test_reparameterization_validation():
    with pytest.raises(ValueError):
        Reparameterization.gaussian_mixture([(0.0, 0.0, 1.0)])
    with pytest.raises(ValueError):
        Reparameterization.gaussian_mixture([(1.0, 0.0, -1.0)])
    with pytest.raises(ValueError):
        Reparameterization(kind="spline")
    with pytest.raises(ValueError):
        evaluate_F(Reparameterization.identity(), -0.5)


# ------------------------------------------------------------------ vector


def test_single_point_p_inf():
    vec = stable_rank_vector(np.array([[0.0, 2.0]]), INF, Reparameterization.identity(), 4)
    assert vec.values.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_two_points_p1():
    d = np.array([[0.0, 2.0], [1.0, 2.0]])
    vec = stable_rank_vector(d, 1.0, Reparameterization.identity(), 4)
    assert vec.values.tolist() == [3.0, 1.0, 0.0, 0.0]


def test_empty_diagram_zero_vector():
    for p in (1.0, 2.0, INF):
        for rep in (Reparameterization.identity(), MIXTURE):
            vec = stable_rank_vector(np.empty((0, 2)), p, rep, 6)
            assert np.all(vec.values == 0.0)
            assert not vec.truncated


def test_vector_non_increasing_with_zero_tail():
    rng = np.random.default_rng(2)
    for _ in range(50):
        d = random_diagram(rng)
        for p in (1.0, 2.0, INF):
            vec = stable_rank_vector(d, p, Reparameterization.identity(), 10)
            assert np.all(np.diff(vec.values) <= 1e-12)
            assert np.all(vec.values[len(d) :] == 0.0)


def test_single_point_consistency_with_diagonal_distance():
    # for a one-point diagram, r_0 is the diagonal distance of the F-image
    rng = np.random.default_rng(3)
    for _ in range(30):
        a = float(rng.random() * 5)
        b = a + float(rng.random() * 5)
        for p in (1.0, 2.0, 3.0, INF):
            for rep in (Reparameterization.identity(), MIXTURE):
                vec = stable_rank_vector(np.array([[a, b]]), p, rep, 3)
                fa, fb = evaluate_F(rep, a), evaluate_F(rep, b)
                expected = diagonal_distance((fa, fb), p)
                assert vec.values[0] == pytest.approx(expected, abs=1e-12)


def test_identity_p_inf_homogeneity():
    rng = np.random.default_rng(4)
    d = random_diagram(rng, max_points=6)
    v1 = stable_rank_vector(d, INF, Reparameterization.identity(), 8).values
    v2 = stable_rank_vector(2.0 * d, INF, Reparameterization.identity(), 8).values
    assert np.allclose(v2, 2.0 * v1, atol=1e-12)


def test_truncation_keeps_largest_lifetimes():
    d = np.array([[0.0, 1.0], [0.0, 5.0], [0.0, 3.0]])
    vec = stable_rank_vector(d, INF, Reparameterization.identity(), 3)
    assert vec.truncated
    # keeps lifetimes 5 and 3 -> r = (2.5, 1.5, 0)
    assert vec.values.tolist() == [2.5, 1.5, 0.0]


def test_vectorize_dataset_consistency():
    rng = np.random.default_rng(5)
    diagrams = [random_diagram(rng) for _ in range(8)]
    n_dim = suggested_dimension(diagrams)
    matrix, truncated = vectorize_dataset(diagrams, INF, Reparameterization.identity(), n_dim)
    assert matrix.shape == (8, n_dim)
    assert not truncated.any()
    single = stable_rank_vector(diagrams[3], INF, Reparameterization.identity(), n_dim)
    assert np.array_equal(matrix[3], single.values)
    zeros, _ = vectorize_dataset([np.empty((0, 2))] * 3, 2.0, MIXTURE, 4)
    assert np.all(zeros == 0.0)


# --------------------------------------------------------------- stability


@pytest.mark.parametrize("p", [1.0, 2.0, INF])
@pytest.mark.parametrize("rep", [Reparameterization.identity(), MIXTURE], ids=["id", "gm"])
def test_stability_bound(p, rep):
    rng = np.random.default_rng(17)
    K = lipschitz_bound(rep)
    for _ in range(120):
        d1, d2 = random_diagram(rng), random_diagram(rng)
        n_dim = max(len(d1), len(d2)) + 1
        v1 = stable_rank_vector(d1, p, rep, n_dim).values
        v2 = stable_rank_vector(d2, p, rep, n_dim).values
        gap = float(np.max(np.abs(v1 - v2))) if n_dim else 0.0
        assert gap <= K * wasserstein(d1, d2, p) + 1e-9


# ---------------------------------------------------------------- gradient


@pytest.mark.parametrize("p", [1.0, 2.0, INF])
@pytest.mark.parametrize("rep", [Reparameterization.identity(), MIXTURE], ids=["id", "gm"])
def test_point_gradient_matches_finite_differences(p, rep):
    rng = np.random.default_rng(29)
    h = 1e-6
    for _ in range(20):
        d = random_diagram(rng, max_points=5)
        if len(d) == 0:
            continue
        # keep lifetimes distinct so the sort is locally constant
        if len(np.unique(np.round(d[:, 1] - d[:, 0], 3))) < len(d):
            continue
        n_dim = len(d) + 1
        upstream = rng.standard_normal(n_dim)
        grad = stable_rank_point_gradient(d, p, rep, n_dim, upstream)

        def objective(pts):
            return float(upstream @ stable_rank_vector(pts, p, rep, n_dim).values)

        for i in range(len(d)):
            for j in range(2):
                plus = d.copy()
                plus[i, j] += h
                minus = d.copy()
                minus[i, j] -= h
                fd = (objective(plus) - objective(minus)) / (2 * h)
                assert grad[i, j] == pytest.approx(fd, abs=1e-4, rel=1e-4)
