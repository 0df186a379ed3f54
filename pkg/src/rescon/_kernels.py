"""Compiled elementwise kernels behind the stats module.

These run once per agent per simulation step, so they are numba ufuncs rather
than numpy expressions over temporary arrays.
"""
import math

import numpy as np
from numba import guvectorize, njit, vectorize
from numpy.polynomial.legendre import leggauss

_GL_NODES, _GL_WEIGHTS = leggauss(24)
_Z_SPAN = 10.0
_DECAY_SPAN = 40.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_2_PI = math.sqrt(2.0 / math.pi)
THETA_MAX = 8.0


@njit(cache=True)
def _ndtr(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@njit(cache=True)
def _panel(a, b, left, right):
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    acc = 0.0
    for k in range(_GL_NODES.size):
        z = mid + half * _GL_NODES[k]
        y = a + b * z
        acc += _GL_WEIGHTS[k] * math.log1p(math.exp(-abs(y))) * math.exp(-0.5 * z * z)
    return half * acc


_BREAKS = np.array([-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0])


@njit(cache=True)
def _panels(a, b, lo, hi):
    # Gauss-Legendre over [lo, hi], split at fixed breakpoints so that each
    # panel resolves the unit-width Gaussian factor
    acc = 0.0
    left = lo
    for k in range(_BREAKS.size):
        br = _BREAKS[k]
        if left < br < hi:
            acc += _panel(a, b, left, br)
            left = br
    return acc + _panel(a, b, left, hi)


@njit(cache=True)
def expected_softplus(a, b):
    """E[log(1 + exp(a + b Z))] for Z ~ N(0, 1)."""
    # softplus(y) = relu(y) + log1p(exp(-|y|)): closed-form relu part, panel
    # quadrature for the remainder on either side of its kink at y = 0
    babs = abs(b)
    if babs == 0.0:
        return max(a, 0.0) + math.log1p(math.exp(-abs(a)))
    z = a / babs
    relu = a * _ndtr(z) + babs * math.exp(-0.5 * z * z) * _INV_SQRT_2PI
    kink = min(max(-a / b, -_Z_SPAN), _Z_SPAN)
    # past 2 * _Z_SPAN the decay window covers the whole range; avoids 1 / tiny overflow
    width = 2.0 * _Z_SPAN if babs * 2.0 * _Z_SPAN <= _DECAY_SPAN else _DECAY_SPAN / babs
    lo = max(-_Z_SPAN, kink - width)
    hi = min(_Z_SPAN, kink + width)
    rem = _panels(a, b, lo, kink) + _panels(a, b, kink, hi)
    return relu + rem * _INV_SQRT_2PI


@njit(cache=True)
def folded_kl_scalar(mu1, s1, mu2, s2):
    if mu1 == mu2 and s1 == s2:
        return 0.0
    gauss = 0.5 * (math.log(s2 / s1) - 1.0 + s1 / s2) + 0.5 * (mu2 - mu1) ** 2 / s2
    sd1 = math.sqrt(s1)
    t_p = expected_softplus(-2.0 * mu1 * mu1 / s1, -2.0 * mu1 * sd1 / s1)
    t_q = expected_softplus(-2.0 * mu1 * mu2 / s2, -2.0 * sd1 * mu2 / s2)
    return gauss + t_p - t_q


@vectorize(["float64(float64, float64, float64, float64)"], cache=True)
def folded_kl(mu1, s1, mu2, s2):
    return folded_kl_scalar(mu1, s1, mu2, s2)


@njit(cache=True)
def folded_ratio(theta):
    """E|X| / sqrt(E X^2) for X ~ N(theta, 1)."""
    num = _SQRT_2_PI * math.exp(-0.5 * theta * theta) + theta * math.erf(theta / math.sqrt(2.0))
    return num / math.sqrt(1.0 + theta * theta)


@njit(cache=True)
def folded_theta_scalar(ratio):
    """Invert folded_ratio on [0, THETA_MAX] by bisection."""
    lo, hi = 0.0, THETA_MAX
    if ratio <= folded_ratio(lo):
        return lo
    if ratio >= folded_ratio(hi):
        return hi
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if folded_ratio(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@vectorize(["float64(float64)"], cache=True)
def folded_theta(ratio):
    return folded_theta_scalar(ratio)


@njit(cache=True)
def folded_fit(mean, var, floor):
    """Method-of-moments folded-Gaussian (mu, sigma2); see stats.folded_moments_to_params."""
    var = max(var, 0.0)
    m2 = mean * mean + var
    ratio = mean / math.sqrt(m2) if m2 > 0.0 else 0.0
    theta = folded_theta_scalar(ratio)
    if theta >= THETA_MAX:
        return mean, max(var, floor)
    sigma2 = m2 / (1.0 + theta * theta)
    return theta * math.sqrt(sigma2), max(sigma2, floor)


@njit(cache=True)
def sym_eig(S, w, V):
    """Cyclic Jacobi eigen-decomposition of the symmetric part of S into (w, V).

    Small fixed dimensions make this cheaper than a LAPACK call per step.
    """
    d = S.shape[0]
    M = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            M[i, j] = 0.5 * (S[i, j] + S[j, i])
            V[i, j] = 1.0 if i == j else 0.0
    for _ in range(50):
        off = 0.0
        scale = 0.0
        for i in range(d):
            scale += M[i, i] * M[i, i]
            for j in range(i + 1, d):
                off += M[i, j] * M[i, j]
        if off <= 1e-30 * scale or off == 0.0:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                if M[p, q] == 0.0:
                    continue
                theta = 0.5 * (M[q, q] - M[p, p]) / M[p, q]
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(d):
                    mkp = M[k, p]
                    mkq = M[k, q]
                    M[k, p] = c * mkp - s * mkq
                    M[k, q] = s * mkp + c * mkq
                for k in range(d):
                    mpk = M[p, k]
                    mqk = M[q, k]
                    M[p, k] = c * mpk - s * mqk
                    M[q, k] = s * mpk + c * mqk
                for k in range(d):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    for i in range(d):
        w[i] = M[i, i]


@njit(cache=True)
def gaussian_kl_core(mu_p, Sigma_p, mu_q, Sigma_q, floor):
    """KL(N(mu_p, Sp) || N(mu_q, Sq)) with both covariances' eigenvalues floored."""
    d = mu_p.size
    wp = np.empty(d)
    Vp = np.empty((d, d))
    wq = np.empty(d)
    Vq = np.empty((d, d))
    sym_eig(Sigma_p, wp, Vp)
    sym_eig(Sigma_q, wq, Vq)
    logdet = 0.0
    for k in range(d):
        lp = max(wp[k], floor)
        wp[k] = lp
        logdet -= math.log(lp)
    trace = 0.0
    maha = 0.0
    for k in range(d):
        lq = max(wq[k], floor)
        logdet += math.log(lq)
        # v^T Sp v with Sp = Vp diag(wp) Vp^T
        quad = 0.0
        for m in range(d):
            proj = 0.0
            for r in range(d):
                proj += Vq[r, k] * Vp[r, m]
            quad += wp[m] * proj * proj
        trace += quad / lq
        pm = 0.0
        for r in range(d):
            pm += Vq[r, k] * (mu_q[r] - mu_p[r])
        maha += pm * pm / lq
    return 0.5 * (logdet - d + trace + maha)


@guvectorize(["void(float64[:], float64[:, :], float64[:], float64[:, :], float64, float64[:])"],
             "(d),(d,d),(d),(d,d),()->()", cache=True)
def gaussian_kl(mu_p, Sigma_p, mu_q, Sigma_q, floor, out):
    out[0] = gaussian_kl_core(mu_p, Sigma_p, mu_q, Sigma_q, floor)
