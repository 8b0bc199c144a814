import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from supermix import (
    FidelitySpec,
    MixingKernelSpec,
    PsiEvaluator,
    admissible_bandwidth,
    audit_certificate,
    build_certificate,
    c0m_norm_bound,
    certificate_l2_norm,
    certificate_value,
    psi_value_grad_hess,
)
from supermix.certificate import sinc_derivatives, spectral_floor
from supermix.errors import BandMismatchError, IllConditionedCertificateError
from supermix.measures import min_separation

FIG1 = np.array([[-13.1], [-0.9], [14.0]])


def test_psi_at_origin():
    for m in (1.0, 3.0, 10.0):
        for d in (1, 2, 3):
            val, grad, hess = psi_value_grad_hess(PsiEvaluator(m, d), np.zeros(d))
            assert val == 1.0
            assert np.all(grad == 0)
            assert np.array_equal(hess, -(4.0 / 3.0) * m * m * np.eye(d))


def test_psi_at_sinc_zero():
    val, grad, hess = psi_value_grad_hess(PsiEvaluator(1.0, 1), [np.pi])
    assert val == pytest.approx(0.0, abs=1e-30)
    assert grad[0] == pytest.approx(0.0, abs=1e-30)
    assert hess[0, 0] == pytest.approx(0.0, abs=1e-25)


def test_psi_finite_differences():
    ev = PsiEvaluator(3.0, 2)
    rng = np.random.default_rng(0)
    h = 1e-6
    for x in rng.uniform(-1, 1, size=(20, 2)):
        _, grad, hess = ev.evaluate(x)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            vp, gp, _ = ev.evaluate(x + e)
            vm, gm, _ = ev.evaluate(x - e)
            assert abs((vp - vm) / (2 * h) - grad[j]) < 1e-6
            assert np.max(np.abs((gp - gm) / (2 * h) - hess[:, j])) < 1e-4


def test_sinc_derivatives_continuous_across_branch():
    left = sinc_derivatives(np.nextafter(1.0, 0), 4)
    right = sinc_derivatives(1.0, 4)
    assert np.allclose(left, right, rtol=1e-13, atol=1e-15)
    g = sinc_derivatives(np.array([0.0]), 4)[:, 0]
    assert np.allclose(g, [1, 0, -1 / 3, 0, 1 / 5], atol=1e-15)


def test_single_spike_decouples():
    cert = build_certificate([[2.5]], 1.7)
    assert cert.alpha == pytest.approx([1.0])
    assert np.all(np.abs(cert.beta) < 1e-15)


def test_figure1_p_certificate():
    cert = build_certificate(FIG1, 2.0)
    assert np.max(np.abs(cert.alpha - 1)) < 1e-4
    assert np.allclose(certificate_value(cert, FIG1), 1.0, atol=1e-10)
    t = np.linspace(-20, 20, 8001)
    vals = certificate_value(cert, t)
    assert vals.min() >= 0
    assert vals.max() <= 1 + 1e-9


def test_selector_certificate():
    cert = build_certificate(FIG1, 2.0, kind="Q", index=1)
    p = cert.p_value(FIG1)
    assert p[1] == pytest.approx(1.0, abs=1e-10)
    assert abs(p[0]) < 1e-10 and abs(p[2]) < 1e-10
    with pytest.raises(ValueError):
        build_certificate(FIG1, 2.0, kind="Q")


def test_admissible_bandwidth_examples():
    assert admissible_bandwidth(1, 1, 1.0) == 1.0
    assert admissible_bandwidth(3, 1, 12.2) == pytest.approx(math.sqrt(3))
    assert admissible_bandwidth(4, 2, 0.5) == pytest.approx(11.31, abs=5e-3)
    with pytest.raises(ValueError):
        admissible_bandwidth(1, 1, 0.0)


def test_audit_single_spike_decay():
    cert = build_certificate([[0.0]], 2.0)
    rep = audit_certificate(cert, {"low": -0.05, "high": 0.05, "points": 201}, epsilon=0.025)
    assert rep.near_decay == pytest.approx(4.0 / 3.0, rel=1e-2)
    assert rep.value_residual <= 1e-10


def test_audit_figure1():
    cert = build_certificate(FIG1, 2.0)
    rep = audit_certificate(cert, {"low": -20, "high": 20, "points": 8001})
    assert rep.far_gap > 0
    assert rep.value_residual <= 1e-10
    assert rep.gradient_residual <= 1e-8 * cert.m
    assert rep.grid_max <= 1 + 1e-9
    assert rep.epsilon == pytest.approx(0.5)


def test_l2_norm_single_spike():
    m = 1.5
    cert = build_certificate([[0.0]], m)
    g16 = lambda x: np.sinc(x / np.pi) ** 16
    oracle = 2 * integrate.quad(g16, 0, 400, limit=2000, epsabs=0, epsrel=1e-13)[0] / m
    assert certificate_l2_norm(cert) == pytest.approx(math.sqrt(oracle), rel=1e-6)
    doubled = certificate_l2_norm(build_certificate([[0.0]], 2 * m))
    assert doubled**2 / certificate_l2_norm(cert) ** 2 == pytest.approx(0.5, rel=0.05)


def test_l2_norm_two_dims_nonnegative():
    cert = build_certificate([[0.0, 0.0], [3.0, 1.0]], 5.0)
    assert certificate_l2_norm(cert) > 0


def test_spectral_floor_and_c0m_bound():
    assert spectral_floor(MixingKernelSpec.gaussian(1), 1.0) == pytest.approx(math.exp(-8))
    assert spectral_floor(MixingKernelSpec.multivariate_laplace(1), 1.0) == pytest.approx(1 / 9)
    cert = build_certificate([[0.0]], 1.0)
    fid = FidelitySpec(0.25)
    norm = certificate_l2_norm(cert)
    bound = c0m_norm_bound(cert, MixingKernelSpec.gaussian(1), fid)
    assert bound == pytest.approx(norm / math.sqrt(math.exp(-16) * 0.5), rel=1e-12)
    with pytest.raises(BandMismatchError):
        c0m_norm_bound(cert, MixingKernelSpec.gaussian(1), FidelitySpec(0.3))


def test_fourier_support_of_interpolant():
    # p has spectrum inside [-4m, 4m]; probe at 5m
    m = 2.0
    cert = build_certificate(FIG1, m)
    nodes, weights = np.polynomial.legendre.leggauss(32)
    edges = np.arange(-400.0, 400.0 + 1e-9, 0.25)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    t = (mid[:, None] + half[:, None] * nodes).ravel()
    w = (half[:, None] * weights).ravel()
    p = cert.p_value(t)
    l1 = np.sum(w * np.abs(p))
    assert abs(np.sum(w * p * np.cos(5 * m * t))) <= 1e-6 * l1
    # while the band edge itself carries signal
    assert abs(np.sum(w * p * np.cos(3 * m * t))) > 1e-6 * l1


def test_permutation_and_translation():
    rng = np.random.default_rng(3)
    sup = np.array([[0.0, 0.0], [2.0, 0.5], [0.4, 2.2]])
    cert = build_certificate(sup, 6.0)
    perm = rng.permutation(3)
    other = build_certificate(sup[perm], 6.0)
    assert np.allclose(other.alpha, cert.alpha[perm], atol=1e-10)
    assert np.allclose(other.beta, cert.beta[perm], atol=1e-10)
    v = np.array([1.3, -0.7])
    moved = build_certificate(sup + v, 6.0)
    probes = rng.uniform(-1, 3, size=(200, 2))
    assert np.max(np.abs(moved.value(probes + v) - cert.value(probes))) < 1e-10


def test_coefficient_bounds_sweep():
    rng = np.random.default_rng(0)
    for K in (2, 3, 5):
        for d in (1, 2):
            for mult in (2, 4):
                while True:
                    span = 2 * K if d == 1 else 1.6 * K ** (1 / d)
                    sup = rng.uniform(0, span, size=(K, d))
                    if min_separation(sup) >= 0.5:
                        break
                delta_p = min(min_separation(sup), 1.0)
                m = mult * admissible_bandwidth(K, d, min_separation(sup))
                cert = build_certificate(sup, m)
                a_bound = K * d**3 / (m**4 * delta_p**4)
                b_bound = math.sqrt(K) / (m * math.sqrt(d)) * a_bound
                assert np.max(np.abs(cert.alpha - 1)) <= 10 * a_bound
                assert np.linalg.norm(cert.beta) <= 10 * b_bound


def test_ill_conditioned_raises():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(IllConditionedCertificateError) as info:
            build_certificate([[0.0], [1e-7]], 1.0)
    assert info.value.condition_number > 1e12


def test_below_admissible_warns():
    with pytest.warns(RuntimeWarning):
        build_certificate(FIG1, 1.0)
