"""Local KL-divergence attack detectors.

Two detectors run per agent, each reading only that agent's own and received
information:

* the IMP detector compares the folded-Gaussian fits of tau_i (norm of the
  summed discrepancies) and phi_i (sum of the discrepancy norms);
* the non-IMP detector compares a Gaussian fit of the noisy tracking error
  against its attack-free law N(0, Sigma_wi).

Both average the per-step divergence over a sliding window and declare H1
when the average exceeds the agent's threshold.

Detector state is array-shaped: a single agent uses shape ``()``, the
simulation uses ``(batch, agents)``.  :func:`replay_detectors` evaluates the
same statistics over a whole recorded run at once, for runs where the
detector output does not feed back into the dynamics.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import DiGraph
from .stats import (
    VAR_FLOOR,
    folded_kl,
    folded_moments_to_params,
    gaussian_kl_arrays,
    gaussian_moments_to_params,
)

H0, H1 = 0, 1


def error_sequences(g: DiGraph, i: int, received_states: np.ndarray, own_state: np.ndarray,
                    noise: Optional[np.ndarray] = None) -> tuple[float, float]:
    """(tau_i, phi_i) from the discrepancies d_ij = x_j^c - x_i^c + w_ij.

    ``received_states[j]`` is what agent i receives from j; ``noise[j]`` is w_ij.
    """
    a = g.weights[i]
    d = np.asarray(received_states, dtype=float) - np.asarray(own_state, dtype=float)
    if noise is not None:
        d = d + np.asarray(noise, dtype=float)
    ad = a[:, None] * d
    tau = float(np.linalg.norm(ad.sum(axis=0)))
    phi = float(np.linalg.norm(ad, axis=1).sum())
    return tau, phi


@dataclass
class DetectorConfig:
    """Thresholds may be scalars or per-agent arrays; ``None`` means uncalibrated
    (averages are still computed, hypotheses stay H0)."""

    window: int = 200
    gamma_imp: Optional[np.ndarray] = None
    gamma_nonimp: Optional[np.ndarray] = None
    nominal_cov: Optional[np.ndarray] = None  # (..., d, d) attack-free covariance of eta_i
    warmup: float = 15.0

    def __post_init__(self):
        if self.window < 8:
            raise ValueError("detector window must be at least 8 samples")
        for name in ("gamma_imp", "gamma_nonimp"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=float)
                if np.any(val <= 0):
                    raise ValueError(f"{name} must be positive")
                setattr(self, name, val)

    @property
    def calibrated(self) -> bool:
        return self.gamma_imp is not None and self.gamma_nonimp is not None


class RingWindow:
    """Sliding window over the last ``size`` samples with running first and
    second moments.  Sums are rebuilt from the buffer every ``size`` pushes."""

    def __init__(self, size: int, shape: tuple, vector: bool = False):
        self.size = size
        self.vector = vector
        self.buf = np.zeros((size,) + shape)
        self.pos = 0
        self.count = 0
        self._since_refresh = 0
        self.s1 = np.zeros(shape)
        self.s2 = np.zeros(shape + (shape[-1],)) if vector else np.zeros(shape)

    def _second(self, x):
        return x[..., :, None] * x[..., None, :] if self.vector else x * x

    def push(self, x: np.ndarray) -> None:
        old = self.buf[self.pos]
        if self.count == self.size:
            self.s1 -= old
            self.s2 -= self._second(old)
        self.buf[self.pos] = x
        self.s1 += x
        self.s2 += self._second(x)
        self.pos = (self.pos + 1) % self.size
        self.count = min(self.count + 1, self.size)
        self._since_refresh += 1
        if self._since_refresh == self.size:
            self._since_refresh = 0
            live = self.buf[: self.count]
            self.s1 = live.sum(axis=0)
            self.s2 = (np.einsum("k...i,k...j->...ij", live, live) if self.vector else (live * live).sum(axis=0))

    @property
    def full(self) -> bool:
        return self.count == self.size

    def mean_var(self):
        n = max(self.count, 1)
        mean = self.s1 / n
        return mean, np.maximum(self.s2 / n - mean**2, 0.0)

    def mean_cov(self):
        return gaussian_moments_to_params(self.s1, self.s2, np.full(self.s1.shape[:-1], max(self.count, 1), float))

    def mean(self):
        return self.s1 / max(self.count, 1)


@dataclass
class DetectorState:
    shape: tuple
    dim: int
    window: int
    tau_win: RingWindow = field(init=False)
    phi_win: RingWindow = field(init=False)
    eta_win: RingWindow = field(init=False)
    kl_imp_win: RingWindow = field(init=False)
    kl_nonimp_win: RingWindow = field(init=False)

    def __post_init__(self):
        T, s = self.window, tuple(self.shape)
        self.tau_win = RingWindow(T, s)
        self.phi_win = RingWindow(T, s)
        self.eta_win = RingWindow(T, s + (self.dim,), vector=True)
        self.kl_imp_win = RingWindow(T, s)
        self.kl_nonimp_win = RingWindow(T, s)
        self.kl_imp = np.zeros(s)
        self.kl_nonimp = np.zeros(s)
        self.avg_imp = np.zeros(s)
        self.avg_nonimp = np.zeros(s)
        self.h_imp = np.zeros(s, dtype=int)
        self.h_nonimp = np.zeros(s, dtype=int)

    @property
    def warm(self) -> bool:
        return self.tau_win.full


def _decide(avg, gamma, active):
    if gamma is None:
        return np.zeros(np.shape(avg), dtype=int)
    return np.where(active & (avg > gamma), H1, H0)


def imp_detector_step(state: DetectorState, cfg: DetectorConfig, tau, phi, t: float = np.inf):
    """Push one (tau, phi) sample; returns the IMP hypothesis (H0/H1)."""
    state.tau_win.push(tau)
    state.phi_win.push(phi)
    if state.tau_win.full:
        mu_t, s_t = folded_moments_to_params(*state.tau_win.mean_var())
        mu_p, s_p = folded_moments_to_params(*state.phi_win.mean_var())
        state.kl_imp = folded_kl(mu_p, s_p, mu_t, s_t)
        state.kl_imp_win.push(state.kl_imp)
        state.avg_imp = state.kl_imp_win.mean()
    state.h_imp = _decide(state.avg_imp, cfg.gamma_imp, state.tau_win.full and t > cfg.warmup)
    return state.h_imp


def nonimp_detector_step(state: DetectorState, cfg: DetectorConfig, eta_sample, t: float = np.inf):
    """Push one tracking-error sample; returns the non-IMP hypothesis."""
    state.eta_win.push(eta_sample)
    if state.eta_win.full:
        mean, cov = state.eta_win.mean_cov()
        nominal = cfg.nominal_cov if cfg.nominal_cov is not None else VAR_FLOOR * np.eye(state.dim)
        state.kl_nonimp = gaussian_kl_arrays(mean, cov, np.zeros_like(mean), nominal)
        state.kl_nonimp_win.push(state.kl_nonimp)
        state.avg_nonimp = state.kl_nonimp_win.mean()
    state.h_nonimp = _decide(state.avg_nonimp, cfg.gamma_nonimp, state.eta_win.full and t > cfg.warmup)
    return state.h_nonimp


# --------------------------------------------------------------------------
# whole-run evaluation

def trailing_sums(x: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Sums over trailing windows of length min(k+1, T) along axis 0, and counts."""
    c = np.cumsum(x, axis=0)
    out = c.copy()
    out[T:] = c[T:] - c[:-T]
    counts = np.minimum(np.arange(1, x.shape[0] + 1), T).astype(float)
    return out, counts


def _trailing_mean(x, T):
    s, n = trailing_sums(x, T)
    return s / n.reshape((-1,) + (1,) * (x.ndim - 1))


def replay_detectors(cfg: DetectorConfig, tau: np.ndarray, phi: np.ndarray, eta: np.ndarray,
                     times: np.ndarray) -> dict:
    """Detector outputs for every step of a recorded run.

    ``tau``, ``phi`` have shape (K, ...); ``eta`` (K, ..., d).  Matches the
    step-by-step functions up to summation rounding.
    """
    T = cfg.window
    K = tau.shape[0]
    ready = np.arange(K) >= T - 1
    bshape = (-1,) + (1,) * (tau.ndim - 1)

    m_t = _trailing_mean(tau, T)
    v_t = np.maximum(_trailing_mean(tau * tau, T) - m_t**2, 0.0)
    m_p = _trailing_mean(phi, T)
    v_p = np.maximum(_trailing_mean(phi * phi, T) - m_p**2, 0.0)
    kl_imp = np.zeros_like(tau)
    r = ready
    mu_t, s_t = folded_moments_to_params(m_t[r], v_t[r])
    mu_p, s_p = folded_moments_to_params(m_p[r], v_p[r])
    kl_imp[r] = folded_kl(mu_p, s_p, mu_t, s_t)

    e1 = _trailing_mean(eta, T)
    e2 = _trailing_mean(eta[..., :, None] * eta[..., None, :], T)
    cov = e2[r] - e1[r][..., :, None] * e1[r][..., None, :]
    d = eta.shape[-1]
    nominal = cfg.nominal_cov if cfg.nominal_cov is not None else VAR_FLOOR * np.eye(d)
    from .stats import _floored_eigh  # noqa: PLC0415
    w, V = _floored_eigh(cov)
    cov = (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)
    kl_nonimp = np.zeros_like(tau)
    kl_nonimp[r] = gaussian_kl_arrays(e1[r], cov, np.zeros_like(e1[r]), nominal)

    def window_avg(kl):
        out = np.zeros_like(kl)
        sub = kl[r]
        out[r] = _trailing_mean(sub, T)
        return out

    avg_imp = window_avg(kl_imp)
    avg_nonimp = window_avg(kl_nonimp)
    active = (ready & (np.asarray(times) > cfg.warmup)).reshape(bshape)
    return {
        "kl_imp": kl_imp,
        "kl_nonimp": kl_nonimp,
        "avg_imp": avg_imp,
        "avg_nonimp": avg_nonimp,
        "h_imp": _decide(avg_imp, cfg.gamma_imp, active),
        "h_nonimp": _decide(avg_nonimp, cfg.gamma_nonimp, active),
        "ready": ready,
    }


def first_alarm_time(h: np.ndarray, times: np.ndarray, after: float) -> Optional[float]:
    """First time >= ``after`` at which ``h`` is H1, or None."""
    idx = np.flatnonzero((np.asarray(times) >= after) & (np.asarray(h) == H1))
    return float(times[idx[0]]) if idx.size else None


def stack_thresholds(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float)
