"""Self-belief, neighbor trust and the trust-weighted control protocol.

Every agent runs three discounted first-order filters:

* c1 tracks chi1 = Delta / (Delta + D_imp), the IMP detector divergence;
* c2 tracks chi2 = Delta / (Delta + D_nonimp);
* eta_ij tracks L_ij = 1 - Lambda1 / (Lambda1 + exp(-Lambda2 / D_ij)), where
  D_ij compares the stream received from j with the in-degree-normalized
  neighborhood aggregate.

Self-belief is xi = min(c1, c2) and trust is Omega_ij = max(xi_i, eta_ij).
Filters take explicit Euler steps and are clamped to [0, 1].  State arrays
may carry any leading batch shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .errors import TooFewSamples
from .graph import DiGraph
from .stats import gaussian_kl_arrays, window_estimate_gaussian


@dataclass
class TrustConfig:
    Delta: Optional[np.ndarray] = None  # per-agent; None until calibrated
    kappa1: float = 2.0
    kappa2: float = 2.0
    kappa3: float = 2.0
    Lambda1: float = 1.0
    Lambda2: float = 1.0
    trust_window: int = 200

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "kappa3", "Lambda1", "Lambda2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.trust_window < 8:
            raise ValueError("trust_window must be at least 8 samples")
        if self.Delta is not None:
            self.Delta = np.asarray(self.Delta, dtype=float)
            if np.any(self.Delta <= 0):
                raise ValueError("Delta must be positive")


@dataclass
class TrustState:
    """Confidences per agent (shape ``agents``), raw trust per in-edge (shape ``edges``)."""

    c1: np.ndarray
    c2: np.ndarray
    eta_raw: np.ndarray

    @classmethod
    def initial(cls, agent_shape, edge_shape) -> "TrustState":
        return cls(np.ones(agent_shape), np.ones(agent_shape), np.ones(edge_shape))

    @property
    def xi(self) -> np.ndarray:
        return self_belief(self)


def chi(D, Delta):
    """Delta / (Delta + D); 1 at D = 0, 1/2 at D = Delta."""
    D = np.asarray(D, dtype=float)
    return Delta / (Delta + D)


def link_score(D, Lambda1: float, Lambda2: float):
    """L = 1 - Lambda1 / (Lambda1 + exp(-Lambda2 / D)), with D = 0 mapped to its limit."""
    D = np.asarray(D, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        e = np.exp(-Lambda2 / D)
    return 1.0 - Lambda1 / (Lambda1 + e)


def _euler(value, target, kappa, dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return np.clip(value + dt * kappa * (target - value), 0.0, 1.0)


def _delta(cfg: TrustConfig):
    return 1.0 if cfg.Delta is None else cfg.Delta


def confidence_imp_step(state: TrustState, cfg: TrustConfig, D_imp, dt: float) -> np.ndarray:
    state.c1 = _euler(state.c1, chi(D_imp, _delta(cfg)), cfg.kappa1, dt)
    return state.c1


def confidence_nonimp_step(state: TrustState, cfg: TrustConfig, D_nonimp, dt: float) -> np.ndarray:
    state.c2 = _euler(state.c2, chi(D_nonimp, _delta(cfg)), cfg.kappa2, dt)
    return state.c2


def self_belief(state: TrustState) -> np.ndarray:
    return np.minimum(state.c1, state.c2)


def raw_trust_update(state: TrustState, cfg: TrustConfig, D_link, dt: float, active=True) -> np.ndarray:
    """Euler step of eta toward L(D_link); edges with ``active`` False are held."""
    new = _euler(state.eta_raw, link_score(D_link, cfg.Lambda1, cfg.Lambda2), cfg.kappa3, dt)
    state.eta_raw = np.where(active, new, state.eta_raw)
    return state.eta_raw


def link_divergence(xj_window, mi_window) -> float:
    """Gaussian KL between windowed fits of a neighbor's stream and the normalized aggregate."""
    p = window_estimate_gaussian(xj_window)
    q = window_estimate_gaussian(mi_window)
    return float(gaussian_kl_arrays(p.mu, p.Sigma, q.mu, q.Sigma))


def raw_trust_step(state: TrustState, cfg: TrustConfig, xj_window, mi_window, dt: float,
                   edge: Optional[int] = None) -> np.ndarray:
    """Raw-trust update from sample windows.

    ``mi_window`` holds the neighborhood aggregate already divided by the
    in-degree.  Raises TooFewSamples (leaving the state untouched) until the
    windows hold ``trust_window`` samples.
    """
    n = min(len(xj_window), len(mi_window))
    if n < cfg.trust_window:
        raise TooFewSamples(f"trust window needs {cfg.trust_window} samples, has {n}")
    D = link_divergence(np.asarray(xj_window)[-cfg.trust_window:], np.asarray(mi_window)[-cfg.trust_window:])
    if edge is None:
        return raw_trust_update(state, cfg, D, dt)
    eta = state.eta_raw.copy()
    eta[edge] = _euler(eta[edge], link_score(D, cfg.Lambda1, cfg.Lambda2), cfg.kappa3, dt)
    state.eta_raw = eta
    return eta


def trust(state: TrustState, heads: Optional[np.ndarray] = None) -> np.ndarray:
    """Omega per in-edge; ``heads[e]`` is the receiving agent of edge e.

    Without ``heads`` the state is taken to describe a single agent, so the
    scalar self-belief is compared with each of its in-edges.
    """
    xi = self_belief(state)
    if heads is None:
        return np.maximum(xi[..., None] if np.ndim(xi) else xi, state.eta_raw)
    return np.maximum(xi[..., heads], state.eta_raw)


def resilient_tracking_error(g: DiGraph, i: int, states: np.ndarray, trust_row: np.ndarray,
                             neighbor_beliefs: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """sum_j Omega_ij xi_j a_ij (x_j - x_i) + sum_j a_ij w_ij.

    ``trust_row[j]`` is Omega_ij and ``neighbor_beliefs[j]`` is xi_j, both
    indexed by agent; ``noise[j]`` is w_ij.
    """
    x = np.asarray(states, dtype=float)
    a = g.weights[i]
    w = np.asarray(trust_row, dtype=float) * np.asarray(neighbor_beliefs, dtype=float) * a
    eta = w @ (x - x[i])
    if noise is not None:
        eta = eta + a @ np.asarray(noise, dtype=float)
    return eta


def effective_graph(g: DiGraph, omega: np.ndarray, xi: np.ndarray) -> DiGraph:
    """Trust-weighted graph with a_ij(t) = Omega_ij xi_j a_ij; ``omega`` is (n, n) by agent."""
    return DiGraph(g.weights * np.asarray(omega) * np.asarray(xi)[None, :])


# --------------------------------------------------------------------------
# whole-run evaluation

def filter_series(target: np.ndarray, kappa: float, dt: float, start: int = 0) -> np.ndarray:
    """Euler filter outputs y_k = y_{k-1} + dt kappa (target_k - y_{k-1}), y_{-1} = 1,
    along axis 0; steps before ``start`` hold 1.

    Equal to repeated ``_euler`` calls whenever dt * kappa <= 1 and targets
    lie in [0, 1], since the clamp never engages then.
    """
    a = 1.0 - dt * kappa
    out = np.ones_like(target, dtype=float)
    if start < target.shape[0]:
        seg = target[start:]
        zi = np.full((1,) + seg.shape[1:], a)
        out[start:], _ = lfilter([dt * kappa], [1.0, -a], seg, axis=0, zi=zi)
    return np.clip(out, 0.0, 1.0)
