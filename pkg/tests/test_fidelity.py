import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from supermix import (
    CorrelationEvaluator,
    DiscreteMeasure,
    FidelitySpec,
    MixingKernelSpec,
    Sample,
    build_cache,
    eta,
    eta_gradient,
    objective,
    sample_mixture,
    xi,
    xi_gradient,
    zeta,
    zeta_gradient,
)
from supermix.errors import DimensionMismatchError, EmptyInputError
from supermix.fidelity import Observation

from oracles import spatial_objective

GAUSS = MixingKernelSpec.gaussian(1)


@pytest.fixture(scope="module")
def ev25():
    return CorrelationEvaluator(GAUSS, FidelitySpec(0.25), max_lag=20)


def test_xi_closed_form(ev25):
    expected = 0.5 * math.sqrt(2 * math.pi) * erf(4 / math.sqrt(2))
    assert xi(ev25, 0.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.253236, abs=5e-6)
    assert xi(ev25, 1.3) == pytest.approx(xi(ev25, -1.3), rel=1e-13)
    pure = CorrelationEvaluator(MixingKernelSpec.identity(1), FidelitySpec(0.5))
    assert xi(pure, 0.0) == pytest.approx(2.0, rel=1e-13)


def test_zeta_closed_form(ev25):
    expected = 0.5 * math.sqrt(math.pi) * erf(4)
    assert zeta(ev25, 0.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.886227, abs=1e-6)
    rng = np.random.default_rng(1)
    u = rng.uniform(-20, 20, size=(100, 1))
    assert np.all(ev25.zeta(u) <= zeta(ev25, 0.0))
    assert np.allclose(ev25.zeta(u), ev25.zeta(-u), rtol=0, atol=1e-14)


def test_gradients(ev25):
    assert xi_gradient(ev25, 0.0)[0] == 0.0
    assert zeta_gradient(ev25, 0.0)[0] == 0.0
    h = 1e-5
    fd = (xi(ev25, 1 + h) - xi(ev25, 1 - h)) / (2 * h)
    assert xi_gradient(ev25, 1.0)[0] == pytest.approx(fd, abs=1e-7)
    u = np.linspace(-5, 5, 11).reshape(-1, 1)
    assert np.allclose(ev25.zeta_gradient(u), -ev25.zeta_gradient(-u), atol=1e-15)


@pytest.mark.parametrize(
    "spec", [MixingKernelSpec.gaussian(2), MixingKernelSpec.multivariate_laplace(2), MixingKernelSpec.multivariate_cauchy(3)]
)
def test_gradients_hessians_multidim(spec):
    ev = CorrelationEvaluator(spec, FidelitySpec(0.4, spec.dim), max_lag=5)
    rng = np.random.default_rng(2)
    u = rng.uniform(-2, 2, size=(20, spec.dim))
    h = 1e-5
    for j in range(spec.dim):
        e = np.zeros(spec.dim)
        e[j] = h
        fd = (ev.zeta(u + e) - ev.zeta(u - e)) / (2 * h)
        assert np.max(np.abs(fd - ev.zeta_gradient(u)[:, j])) < 1e-6
        fdh = (ev.xi_gradient(u + e) - ev.xi_gradient(u - e)) / (2 * h)
        assert np.max(np.abs(fdh - ev.xi_hessian(u)[:, :, j])) < 1e-6


def test_doubling_nodes_is_stable():
    for spec in (GAUSS, MixingKernelSpec.tensor_laplace(1)):
        a = CorrelationEvaluator(spec, FidelitySpec(0.25, 1, 64), max_lag=20)
        b = CorrelationEvaluator(spec, FidelitySpec(0.25, 1, 2 * a.n_nodes))
        u = np.linspace(-20, 20, 81).reshape(-1, 1)
        assert np.max(np.abs(a.xi(u) - b.xi(u))) < 1e-9
        assert np.max(np.abs(a.zeta(u) - b.zeta(u))) < 1e-9


def test_cache_single_point(ev25):
    cache = build_cache(ev25, [[0.7]], Sample(np.array([[0.7]])))
    assert cache.b[0] == pytest.approx(-xi(ev25, 0.0))
    assert cache.Q[0, 0] == pytest.approx(zeta(ev25, 0.0))
    assert cache.const_term == pytest.approx(4.0 / 2, rel=1e-12)
    with pytest.raises(EmptyInputError):
        build_cache(ev25, np.zeros((0, 1)), Sample(np.array([[0.7]])))
    with pytest.raises(EmptyInputError):
        build_cache(ev25, [[0.0]], Sample(np.zeros((0, 1))))


def test_cache_figure1_q(fig1_truth):
    ev = CorrelationEvaluator(GAUSS, FidelitySpec(0.1), max_lag=30)
    s = sample_mixture(fig1_truth, GAUSS, 50, 0)
    cache = build_cache(ev, fig1_truth.locations, s)
    assert np.array_equal(cache.Q, cache.Q.T)
    assert np.linalg.eigvalsh(cache.Q).min() >= -1e-12
    assert np.allclose(np.diag(cache.Q), ev.zeta(np.zeros((1, 1)))[0], rtol=1e-14)


def test_const_term_is_sinc_double_sum(fig1_truth):
    fid = FidelitySpec(0.1)
    s = sample_mixture(fig1_truth, GAUSS, 300, 4)
    ev = CorrelationEvaluator(GAUSS, fid, max_lag=60)
    diff = (s.points - s.points.T).reshape(-1, 1)
    direct = 0.5 * fid.kernel(diff).sum() / s.n**2
    assert Observation.empirical(ev, s).const_term == pytest.approx(direct, rel=1e-10)


def test_objective_matches_spatial_oracle():
    fid = FidelitySpec(0.5)
    pts = np.array([[-1.2], [0.3], [0.9], [2.4], [-0.4]])
    locs = np.array([-1.0, 0.5, 2.0])
    a = np.array([0.3, 0.5, 0.2])
    ev = CorrelationEvaluator(GAUSS, fid, max_lag=10)
    cache = build_cache(ev, locs.reshape(-1, 1), Sample(pts))
    oracle = spatial_objective(fid, pts, a, locs)
    assert objective(cache, a) == pytest.approx(oracle, abs=1e-5)


def test_objective_basics(ev25):
    s = Sample(np.array([[0.0], [0.5], [3.0]]))
    cache = build_cache(ev25, [[0.2]], s)
    assert objective(cache, [0.0]) == cache.const_term
    with pytest.raises(DimensionMismatchError):
        objective(cache, [1.0, 2.0])
    kappa = 0.05
    b, q = cache.b[0], cache.Q[0, 0]
    a_star = np.sign(-b) * max(abs(b) - kappa, 0) / q
    grid = np.linspace(-2, 2, 4001)
    vals = [objective(cache, [g]) + kappa * abs(g) for g in grid]
    assert objective(cache, [a_star]) + kappa * abs(a_star) <= min(vals) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_objective_convex_and_nonnegative(x, y):
    ev = CorrelationEvaluator(GAUSS, FidelitySpec(0.25), max_lag=20)
    s = Sample(np.array([[-3.0], [0.0], [1.0], [5.0]]))
    cache = build_cache(ev, np.linspace(-5, 5, 6).reshape(-1, 1), s)
    x, y = np.array(x), np.array(y)
    mid = objective(cache, (x + y) / 2)
    assert mid <= 0.5 * (objective(cache, x) + objective(cache, y)) + 1e-10
    assert objective(cache, x) >= -1e-10


def test_extended_cache_matches_rebuild(ev25):
    s = Sample(np.array([[0.0], [0.5], [3.0]]))
    cache = build_cache(ev25, [[0.2], [1.0]], s).extended([2.5])
    fresh = build_cache(ev25, [[0.2], [1.0], [2.5]], s)
    assert np.allclose(cache.b, fresh.b, atol=1e-15)
    assert np.allclose(cache.Q, fresh.Q, atol=1e-15)


def test_eta_examples(ev25, fig1_truth):
    s = Sample(np.array([[0.0], [1.0], [-2.0]]))
    t = np.array([0.4])
    empty = DiscreteMeasure.empty(1)
    expected = np.mean(ev25.xi(t - s.points)) / 0.1
    assert eta(ev25, empty, s, 0.1, t) == pytest.approx(expected, rel=1e-13)
    ev = CorrelationEvaluator(GAUSS, FidelitySpec(0.1), max_lag=60)
    probes = np.linspace(-30, 30, 601).reshape(-1, 1)
    assert np.max(np.abs(eta(ev, fig1_truth, fig1_truth, 1.0, probes))) < 1e-10
    single = Sample(np.array([[1.5]]))
    assert eta_gradient(ev25, empty, single, 0.2, [1.5])[0] == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        eta(ev25, empty, s, 0.0, t)


def test_eta_gradient_fd_and_translation(fig1_truth):
    ev = CorrelationEvaluator(GAUSS, FidelitySpec(0.1), max_lag=60)
    s = sample_mixture(fig1_truth, GAUSS, 40, 3)
    mu = DiscreteMeasure([0.3, -0.1, 0.2], [[-12.0], [1.0], [13.0]])
    rng = np.random.default_rng(5)
    probes = rng.uniform(-18, 18, size=(100, 1))
    h = 1e-6
    fd = (eta(ev, mu, s, 0.5, probes + h) - eta(ev, mu, s, 0.5, probes - h)) / (2 * h)
    assert np.max(np.abs(fd - eta_gradient(ev, mu, s, 0.5, probes)[:, 0])) < 1e-6
    v = np.array([2.5])
    e0 = eta(ev, mu, s, 0.5, probes)
    e1 = eta(ev, mu.shifted(v), s.shifted(v), 0.5, probes + v)
    assert np.max(np.abs(e0 - e1)) < 1e-10
    g0 = eta_gradient(ev, mu, s, 0.5, probes)
    g1 = eta_gradient(ev, mu.shifted(v), s.shifted(v), 0.5, probes + v)
    assert np.max(np.abs(g0 - g1)) < 1e-9


def test_population_observation_matches_zeta_sum(fig1_truth):
    ev = CorrelationEvaluator(GAUSS, FidelitySpec(0.1), max_lag=60)
    obs = Observation.population(ev, fig1_truth)
    t = np.linspace(-20, 20, 9).reshape(-1, 1)
    direct = np.array([fig1_truth.weights @ ev.zeta(x - fig1_truth.locations) for x in t])
    assert np.allclose(obs.values(t), direct, atol=1e-14)
    q = ev.zeta_matrix(fig1_truth.locations)
    assert obs.const_term == pytest.approx(0.5 * fig1_truth.weights @ q @ fig1_truth.weights, rel=1e-12)
