import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circcorr.circulant import Spectrum
from circcorr.families import eval_spectrum, make_family
from circcorr.fisher import (
    fisher_blocks,
    fisher_numeric_oracle,
    g_beta,
    g_theta,
    log_det_g_beta,
    log_det_g_beta_batch,
    log_det_g_beta_derivatives,
    mu,
)


def test_mu_p2_enumeration():
    # lam = (e^-t, e^t): mu_0 = (1 + 1)/2, mu_1 = (e^-2t + e^2t)/2
    t = 0.7
    m = mu(Spectrum([np.exp(-t), np.exp(t)]))
    assert m[0] == pytest.approx(1.0)
    assert m[1] == pytest.approx(np.cosh(2 * t))


def test_mu_at_identity_is_one():
    assert np.allclose(mu(Spectrum(np.ones(6))), 1.0)


def test_g_beta_at_identity_is_twice_identity():
    assert np.allclose(g_beta(Spectrum(np.ones(4))), 2 * np.eye(4))


def test_g_theta_full_p4():
    assert np.array_equal(g_theta(make_family("full", 4)), [[3.0, 1.0], [1.0, 1.0]])


def test_g_theta_exchangeable_closed_form():
    for p in range(2, 13):
        assert g_theta(make_family("exchangeable", p))[0, 0] == p * (p - 1) / 2


@settings(max_examples=30, deadline=None)
@given(p=st.integers(2, 10), seed=st.integers(0, 2**32 - 1))
def test_determinant_identity(p, seed):
    rng = np.random.default_rng(seed)
    fam = make_family("full", p)
    spec = eval_spectrum(fam, rng.uniform(-2, 2, fam.d))
    dense = np.linalg.slogdet(g_beta(spec))[1]
    assert log_det_g_beta(spec) == pytest.approx(dense, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("kind", ["full", "exchangeable"])
@pytest.mark.parametrize("p", [2, 3, 6])
def test_closed_forms_match_trace_oracle(kind, p):
    rng = np.random.default_rng(p)
    fam = make_family(kind, p)
    theta, beta = rng.uniform(-1, 1, fam.d), rng.normal(size=p)
    oracle = fisher_numeric_oracle(fam, theta, beta)
    fb = fisher_blocks(fam, theta)
    d = fam.d
    assert np.allclose(oracle[:d, :d], fb.g_theta, rtol=1e-6, atol=1e-8)
    assert np.allclose(oracle[d:, d:], fb.g_beta, rtol=1e-6, atol=1e-8)
    assert np.abs(oracle[:d, d:]).max() < 1e-7


@pytest.mark.parametrize("kind,p", [("full", 5), ("full", 6), ("exchangeable", 4)])
def test_log_det_derivatives_against_finite_differences(kind, p):
    fam = make_family(kind, p)
    theta = np.linspace(-0.4, 0.6, fam.d)
    val, grad, hess = log_det_g_beta_derivatives(fam, theta)
    f = lambda x: log_det_g_beta(eval_spectrum(fam, x))
    assert val == pytest.approx(f(theta), rel=1e-12)
    h = 1e-5
    eye = np.eye(fam.d)
    fd_grad = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in eye])
    fd_hess = np.array([
        [(f(theta + h * a + h * b) - f(theta + h * a - h * b) - f(theta - h * a + h * b) + f(theta - h * a - h * b)) / (4 * h * h)
         for b in eye] for a in eye
    ])
    assert np.allclose(grad, fd_grad, atol=1e-7)
    assert np.allclose(hess, fd_hess, atol=1e-4)


def test_log_det_hessian_is_psd_far_out():
    fam = make_family("full", 8)
    _, _, hess = log_det_g_beta_derivatives(fam, np.array([30.0, -20.0, 10.0, 5.0]))
    assert np.linalg.eigvalsh(hess).min() > -1e-12


def test_batch_matches_single():
    fam = make_family("full", 7)
    thetas = np.random.default_rng(1).uniform(-3, 3, (5, fam.d))
    ref = [log_det_g_beta(eval_spectrum(fam, t)) for t in thetas]
    assert np.allclose(log_det_g_beta_batch(fam, thetas), ref, rtol=1e-12)
