"""KL divergences for folded and multivariate Gaussians, window estimators,
and a quadrature oracle used to validate the closed forms.

All array functions broadcast over leading dimensions so the simulation can
evaluate every agent (and every batched seed) in one call.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from . import _kernels
from .errors import DegenerateVariance, DimensionMismatch, QuadratureFailure, TooFewSamples

VAR_FLOOR = 1e-9


@dataclass(frozen=True)
class FoldedGaussianParams:
    """Law of |X| with X ~ N(mu, sigma2)."""

    mu: float
    sigma2: float


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]


# --------------------------------------------------------------------------
# folded Gaussian KL

def gaussian_kl_1d(mu1, s1, mu2, s2):
    """KL(N(mu1, s1) || N(mu2, s2)) for variances s1, s2."""
    return 0.5 * (np.log(s2 / s1) - 1.0 + s1 / s2) + 0.5 * (mu2 - mu1) ** 2 / s2


def folded_kl_truncated(mu1, s1, mu2, s2):
    """Closed form obtained by truncating log(1 + a) after two terms.

    Exact for zero means; away from zero it degrades quickly (the series for
    log(1 + a) is used where a > 1).  Kept for comparison against the oracle.
    """
    k = mu1**2 / s1
    ratio = s1 / s2
    rho1 = mu1 - 2 * mu2 * ratio
    rho2 = mu1 + 2 * mu2 * ratio
    rho3 = mu1 - 4 * mu2 * ratio
    rho4 = mu1 + 4 * mu2 * ratio
    t2 = (
        1.0
        + 0.5 * np.exp(4 * k) * (1.0 - np.exp(8 * k))
        + np.exp(-k / 2)
        * (
            0.5 * (np.exp(rho3**2 / (2 * s1)) + np.exp(rho4**2 / (2 * s1)))
            - (np.exp(rho1**2 / (2 * s1)) + np.exp(rho2**2 / (2 * s1)))
        )
    )
    return gaussian_kl_1d(mu1, s1, mu2, s2) + t2


def folded_kl(mu1, s1, mu2, s2):
    """KL between folded Gaussians, elementwise over arrays; no validation.

    Splits into the Gaussian KL of the unfolded laws plus the expected log of
    the fold factors, the latter by fixed-order quadrature.
    """
    return _kernels.folded_kl(mu1, s1, mu2, s2)


def _check_folded(p: FoldedGaussianParams) -> None:
    if not np.isfinite(p.sigma2) or p.sigma2 < VAR_FLOOR:
        raise DegenerateVariance(f"sigma2={p.sigma2} below floor {VAR_FLOOR}")


def folded_gaussian_kl(p: FoldedGaussianParams, q: FoldedGaussianParams) -> float:
    _check_folded(p)
    _check_folded(q)
    return float(folded_kl(p.mu, p.sigma2, q.mu, q.sigma2))


def folded_gaussian_kl_truncated(p: FoldedGaussianParams, q: FoldedGaussianParams) -> float:
    _check_folded(p)
    _check_folded(q)
    return float(folded_kl_truncated(p.mu, p.sigma2, q.mu, q.sigma2))


# --------------------------------------------------------------------------
# multivariate Gaussian KL

def _floored_eigh(Sigma):
    w, V = np.linalg.eigh(0.5 * (Sigma + np.swapaxes(Sigma, -1, -2)))
    return np.maximum(w, VAR_FLOOR), V


def gaussian_kl_arrays(mu_p, Sigma_p, mu_q, Sigma_q):
    """KL(N(mu_p, Sigma_p) || N(mu_q, Sigma_q)) with eigenvalue-floored covariances."""
    return _kernels.gaussian_kl(mu_p, Sigma_p, mu_q, Sigma_q, VAR_FLOOR)


def gaussian_kl(p: GaussianParams, q: GaussianParams) -> float:
    if p.dim != q.dim or p.Sigma.shape != (p.dim, p.dim) or q.Sigma.shape != (q.dim, q.dim):
        raise DimensionMismatch(f"dims {p.dim} vs {q.dim}")
    for g in (p, q):
        if np.linalg.eigvalsh(g.Sigma).min() < VAR_FLOOR * (1 - 1e-9):
            raise DegenerateVariance("covariance is not positive definite above the floor")
    return float(gaussian_kl_arrays(p.mu, p.Sigma, q.mu, q.Sigma))


# --------------------------------------------------------------------------
# quadrature oracle

def kl_numeric_oracle(p_density: Callable[[float], float], q_density: Callable[[float], float],
                      support: tuple[float, float], epsabs: float = 1e-8) -> float:
    """Adaptive quadrature of p log(p / q) over ``support``.

    Densities exposing a ``log`` attribute (see :func:`folded_density`) are
    differenced in log space, which keeps far tails from underflowing.
    """
    log_p = getattr(p_density, "log", lambda x: np.log(p_density(x)))
    log_q = getattr(q_density, "log", lambda x: np.log(q_density(x)))

    def integrand(x):
        px = p_density(x)
        if px <= 0.0:
            return 0.0
        return px * (log_p(x) - log_q(x))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, support[0], support[1], epsabs=epsabs, epsrel=1e-10, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if not np.isfinite(val):
        raise QuadratureFailure(f"non-finite integral {val}")
    return float(val)


class _Density:
    def __init__(self, log):
        self.log = log

    def __call__(self, x):
        return np.exp(self.log(x))


def folded_density(p: FoldedGaussianParams) -> _Density:
    c = -0.5 * np.log(2 * np.pi * p.sigma2)
    return _Density(lambda q: c + np.logaddexp(-((q - p.mu) ** 2) / (2 * p.sigma2),
                                               -((q + p.mu) ** 2) / (2 * p.sigma2)))


def gaussian_density_1d(mu: float, sigma2: float) -> _Density:
    c = -0.5 * np.log(2 * np.pi * sigma2)
    return _Density(lambda x: c - (x - mu) ** 2 / (2 * sigma2))


def folded_support(p: FoldedGaussianParams, q: FoldedGaussianParams, width: float = 40.0) -> tuple[float, float]:
    """Integration range covering the mass of p with margin."""
    return 0.0, abs(p.mu) + width * np.sqrt(p.sigma2)


# --------------------------------------------------------------------------
# window estimators

def folded_moments_to_params(mean, var):
    """Method-of-moments (mu, sigma2) of a folded Gaussian from sample mean/variance.

    Falls back to (0, second moment) when the mean is too small relative to the
    spread for any folded Gaussian, and to (mean, var) once the fold is negligible.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.maximum(np.asarray(var, dtype=float), 0.0)
    m2 = mean**2 + var
    ratio = np.divide(mean, np.sqrt(m2), out=np.zeros_like(m2), where=m2 > 0)
    theta = _kernels.folded_theta(ratio)
    sigma2 = m2 / (1.0 + theta**2)
    mu = theta * np.sqrt(sigma2)
    high = theta >= _kernels.THETA_MAX
    mu = np.where(high, mean, mu)
    sigma2 = np.where(high, var, sigma2)
    return mu, np.maximum(sigma2, VAR_FLOOR)


def window_estimate_folded(samples) -> FoldedGaussianParams:
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 8:
        raise TooFewSamples(f"need at least 8 samples, got {x.size}")
    if np.any(x < 0):
        raise ValueError("folded samples must be nonnegative")
    mu, s2 = folded_moments_to_params(x.mean(), x.var())
    return FoldedGaussianParams(float(mu), float(s2))


def gaussian_moments_to_params(s1, s2, count):
    """Mean and floored covariance from running sums of x and x x^T."""
    mean = s1 / count[..., None]
    cov = s2 / count[..., None, None] - mean[..., :, None] * mean[..., None, :]
    w, V = _floored_eigh(cov)
    return mean, (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)


def window_estimate_gaussian(samples) -> GaussianParams:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    if x.shape[0] < d + 2:
        raise TooFewSamples(f"need at least {d + 2} samples, got {x.shape[0]}")
    mean, cov = gaussian_moments_to_params(x.sum(axis=0), x.T @ x, np.asarray(float(x.shape[0])))
    return GaussianParams(mean, cov)
