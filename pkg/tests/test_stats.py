import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rescon.errors import DegenerateVariance, DimensionMismatch, QuadratureFailure, TooFewSamples
from rescon.stats import (
    VAR_FLOOR,
    FoldedGaussianParams,
    GaussianParams,
    folded_density,
    folded_gaussian_kl,
    folded_gaussian_kl_truncated,
    folded_kl,
    folded_moments_to_params,
    folded_support,
    gaussian_density_1d,
    gaussian_kl,
    gaussian_kl_1d,
    kl_numeric_oracle,
    window_estimate_folded,
    window_estimate_gaussian,
)

F = FoldedGaussianParams


def oracle(p, q):
    return kl_numeric_oracle(folded_density(p), folded_density(q), folded_support(p, q))


def closed_form_gaussian_kl(mu_p, Sp, mu_q, Sq):
    d = mu_p.size
    Sq_inv = np.linalg.inv(Sq)
    diff = mu_q - mu_p
    return 0.5 * (np.trace(Sq_inv @ Sp) + diff @ Sq_inv @ diff - d + np.log(np.linalg.det(Sq) / np.linalg.det(Sp)))


def test_equal_zero_mean_is_exactly_zero():
    assert folded_gaussian_kl(F(0.0, 1.0), F(0.0, 1.0)) == 0.0


def test_zero_mean_reduces_to_gaussian_kl():
    # |X| with X ~ N(0, s) is a half-normal; the fold factor cancels in the ratio
    val = folded_gaussian_kl(F(0.0, 1.0), F(0.0, 2.0))
    assert val == pytest.approx(0.5 * (np.log(2.0) - 0.5), abs=1e-14)
    assert val == pytest.approx(0.0965735902799727, abs=1e-14)


def test_frozen_nonzero_mean_value():
    assert folded_gaussian_kl(F(1.0, 1.0), F(0.5, 2.0)) == pytest.approx(0.012649041893670554, abs=1e-12)
    assert oracle(F(1.0, 1.0), F(0.5, 2.0)) == pytest.approx(0.012649041893670554, abs=1e-9)


def test_fold_is_symmetric_in_mean_sign():
    assert folded_gaussian_kl(F(-1.0, 1.0), F(0.5, 2.0)) == pytest.approx(folded_gaussian_kl(F(1.0, 1.0), F(0.5, 2.0)))


def test_truncated_form_agrees_at_zero_mean_only():
    p, q = F(0.0, 1.0), F(0.0, 2.0)
    assert folded_gaussian_kl_truncated(p, q) == pytest.approx(folded_gaussian_kl(p, q), abs=1e-12)
    p, q = F(0.3, 1.0), F(0.15, 1.0)
    assert folded_gaussian_kl_truncated(p, q) < 0.0 < oracle(p, q)
    assert abs(folded_gaussian_kl_truncated(p, q) - oracle(p, q)) > 0.5


def test_large_means_approach_gaussian_kl():
    p, q = F(30.0, 1.0), F(31.0, 1.5)
    assert folded_gaussian_kl(p, q) == pytest.approx(gaussian_kl_1d(30.0, 1.0, 31.0, 1.5), rel=1e-10)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0, 0.3), st.floats(0, 0.3))
def test_folded_kl_within_envelope_of_oracle(s1, s2, r1, r2):
    p, q = F(r1 * np.sqrt(s1), s1), F(r2 * np.sqrt(s2), s2)
    ref = oracle(p, q)
    assert abs(folded_gaussian_kl(p, q) - ref) <= max(0.1 * abs(ref), 0.02)


@given(st.floats(-4, 4), st.floats(0.2, 5), st.floats(-4, 4), st.floats(0.2, 5))
def test_folded_kl_matches_oracle_beyond_envelope(m1, s1, m2, s2):
    p, q = F(m1, s1), F(m2, s2)
    ref = oracle(p, q)
    assert folded_gaussian_kl(p, q) == pytest.approx(ref, rel=1e-6, abs=1e-8)
    assert folded_gaussian_kl(p, q) >= -1e-12


def test_vectorized_folded_kl_matches_scalar():
    mu1, s1 = np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 0.5])
    mu2, s2 = np.array([0.5, 0.0, 2.0]), np.array([1.5, 1.0, 0.5])
    vec = folded_kl(mu1, s1, mu2, s2)
    for k in range(3):
        assert vec[k] == pytest.approx(folded_gaussian_kl(F(mu1[k], s1[k]), F(mu2[k], s2[k])), abs=1e-14)
    assert vec[2] == 0.0


def test_degenerate_variance_rejected():
    with pytest.raises(DegenerateVariance):
        folded_gaussian_kl(F(0.0, 0.0), F(0.0, 1.0))
    with pytest.raises(DegenerateVariance):
        folded_gaussian_kl(F(0.0, 1.0), F(0.0, np.nan))


def test_gaussian_kl_examples():
    z = np.zeros(2)
    assert gaussian_kl(GaussianParams(z, np.eye(2)), GaussianParams([1.0, 0.0], np.eye(2))) == pytest.approx(0.5)
    assert gaussian_kl(GaussianParams([0.0], [[0.5]]), GaussianParams([0.0], [[1.0]])) == pytest.approx(
        0.5 * (np.log(2.0) - 0.5))
    assert gaussian_kl(GaussianParams(z, np.eye(2)), GaussianParams(z, np.eye(2))) == pytest.approx(0.0, abs=1e-14)


@given(st.integers(0, 100_000))
def test_gaussian_kl_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    M1, M2 = rng.normal(size=(2, d, d))
    Sp, Sq = M1 @ M1.T + 0.1 * np.eye(d), M2 @ M2.T + 0.1 * np.eye(d)
    mp, mq = rng.normal(size=(2, d))
    val = gaussian_kl(GaussianParams(mp, Sp), GaussianParams(mq, Sq))
    assert val == pytest.approx(closed_form_gaussian_kl(mp, Sp, mq, Sq), rel=1e-8, abs=1e-10)
    assert val >= -1e-12


def test_gaussian_kl_errors():
    with pytest.raises(DimensionMismatch):
        gaussian_kl(GaussianParams([0.0], [[1.0]]), GaussianParams([0.0, 0.0], np.eye(2)))
    with pytest.raises(DegenerateVariance):
        gaussian_kl(GaussianParams([0.0, 0.0], np.diag([1.0, 0.0])), GaussianParams([0.0, 0.0], np.eye(2)))


def test_oracle_against_gaussian_closed_form():
    p, q = gaussian_density_1d(0.3, 0.8), gaussian_density_1d(-0.2, 1.7)
    assert kl_numeric_oracle(p, q, (-40, 40)) == pytest.approx(gaussian_kl_1d(0.3, 0.8, -0.2, 1.7), abs=1e-9)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_oracle_reports_quadrature_failure():
    with pytest.raises(QuadratureFailure):
        kl_numeric_oracle(lambda x: 1.0, lambda x: 0.0, (0.0, 1.0))


def test_half_normal_moments_invert_to_zero_mean():
    mu, s2 = folded_moments_to_params(np.sqrt(2 / np.pi), 1 - 2 / np.pi)
    assert float(mu) == pytest.approx(0.0, abs=1e-6)
    assert float(s2) == pytest.approx(1.0, rel=1e-9)


@given(st.floats(0.05, 6.0), st.floats(0.1, 4.0))
def test_folded_moment_fit_inverts_exact_moments(mu, sigma):
    from scipy.stats import foldnorm
    dist = foldnorm(mu / sigma, scale=sigma)
    m_hat, s2_hat = folded_moments_to_params(dist.mean(), dist.var())
    assert float(m_hat) == pytest.approx(mu, rel=1e-5, abs=1e-5)
    assert float(s2_hat) == pytest.approx(sigma**2, rel=1e-5)


def test_folded_fit_falls_back_for_impossible_moments():
    mu, s2 = folded_moments_to_params(0.1, 4.0)
    assert float(mu) == 0.0 and float(s2) == pytest.approx(4.01)
    mu, s2 = folded_moments_to_params(0.0, 0.0)
    assert float(s2) == VAR_FLOOR


def test_window_estimators():
    rng = np.random.default_rng(0)
    x = np.abs(rng.normal(3.0, 0.5, 20_000))
    p = window_estimate_folded(x)
    assert p.mu == pytest.approx(3.0, abs=0.02) and p.sigma2 == pytest.approx(0.25, rel=0.05)
    g = window_estimate_gaussian(rng.normal([1.0, -1.0], [1.0, 2.0], (20_000, 2)))
    np.testing.assert_allclose(g.mu, [1.0, -1.0], atol=0.05)
    np.testing.assert_allclose(g.Sigma, np.diag([1.0, 4.0]), atol=0.1)
    with pytest.raises(TooFewSamples):
        window_estimate_folded(np.ones(3))
    with pytest.raises(ValueError):
        window_estimate_folded(-np.ones(10))
    with pytest.raises(TooFewSamples):
        window_estimate_gaussian(np.ones((3, 2)))
    constant = window_estimate_gaussian(np.ones((10, 2)))
    assert np.linalg.eigvalsh(constant.Sigma).min() >= VAR_FLOOR * (1 - 1e-9)
