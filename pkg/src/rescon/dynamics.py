"""Agent LTI dynamics, gain design and the local neighborhood tracking error."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionMismatch, NoSpanningTree, NotStabilizable
from .graph import DiGraph, has_spanning_tree, laplacian

SPECTRUM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AgentDynamics:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class GainDesign:
    K: np.ndarray
    c: float

    def __post_init__(self):
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))
        object.__setattr__(self, "c", float(self.c))

    @property
    def cK(self) -> np.ndarray:
        return self.c * self.K


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-edge Gaussian channel noise.

    ``covariance`` applies to every edge unless ``per_edge`` overrides it for a
    specific ``(tail, head)`` pair.
    """

    covariance: np.ndarray
    per_edge: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        _check_psd(cov)
        per_edge = {}
        for key, value in dict(self.per_edge).items():
            m = np.atleast_2d(np.asarray(value, dtype=float))
            _check_psd(m)
            per_edge[(int(key[0]), int(key[1]))] = m
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "per_edge", per_edge)

    @classmethod
    def isotropic(cls, std: float, n_x: int, seed: int = 0) -> "NoiseModel":
        return cls(std**2 * np.eye(n_x), seed=seed)

    def edge_covariance(self, tail: int, head: int) -> np.ndarray:
        return self.per_edge.get((tail, head), self.covariance)

    def aggregate_covariance(self, g: DiGraph, i: int) -> np.ndarray:
        """Covariance of sum_j a_ij w_ij, the noise in agent i's tracking error."""
        total = np.zeros_like(self.covariance)
        for j in g.in_neighbors(i):
            total += g.weights[i, j] ** 2 * self.edge_covariance(j, i)
        return total


def _check_psd(m: np.ndarray) -> None:
    if m.shape[0] != m.shape[1] or not np.allclose(m, m.T):
        raise ConfigError("noise covariance must be symmetric")
    if np.linalg.eigvalsh(m).min() < -1e-12:
        raise ConfigError("noise covariance must be positive semidefinite")


@dataclass(frozen=True)
class SwarmState:
    t: float
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    marginal: np.ndarray
    unstable: bool


def classify_A_spectrum(dyn: AgentDynamics, tol: float = SPECTRUM_TOL) -> Spectrum:
    eig = np.linalg.eigvals(dyn.A)
    eig = eig[np.lexsort((eig.imag, eig.real))]
    return Spectrum(
        eigenvalues=eig,
        marginal=eig[np.abs(eig.real) < tol],
        unstable=bool(np.any(eig.real > tol)),
    )


def _stabilizing_seed(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # Bass' shift: beta must make A + beta I anti-stable (every eigenvalue in
    # the open right half plane) so that X > 0; then B^T X^-1 places the
    # closed-loop eigenvalues on Re = -beta whenever (A, B) is controllable.
    n = A.shape[0]
    beta = max(0.0, -np.min(np.linalg.eigvals(A).real)) + 1.0
    Ab = A + beta * np.eye(n)
    X = scipy.linalg.solve_continuous_lyapunov(Ab, 2.0 * B @ B.T)
    if np.linalg.matrix_rank(X, tol=1e-10 * max(1.0, np.abs(X).max())) < n:
        raise NotStabilizable("(A, B) is not controllable; no stabilizing seed gain")
    return B.T @ np.linalg.inv(X)


def solve_are_kleinman(A, B, Q, R, tol: float = 1e-10, max_iter: int = 200):
    """Stabilizing solution P of A^T P + P A + Q - P B R^-1 B^T P = 0 and K = R^-1 B^T P."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not np.any(B):
        raise NotStabilizable("B = 0")
    Rinv = np.linalg.inv(R)
    K = _stabilizing_seed(A, B)
    for _ in range(max_iter):
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise NotStabilizable("Kleinman iteration lost closed-loop stability")
        P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = Rinv @ B.T @ P
        residual = A.T @ P + P @ A + Q - P @ B @ Rinv @ B.T @ P
        if np.linalg.norm(residual) < tol * max(1.0, np.linalg.norm(P)):
            return P, K
    raise NotStabilizable(f"Kleinman iteration did not converge in {max_iter} steps")


def nonzero_laplacian_eigenvalues(g: DiGraph) -> np.ndarray:
    eig = np.linalg.eigvals(laplacian(g))
    tol = 1e-8 * max(1.0, np.linalg.norm(laplacian(g), 2))
    return eig[np.abs(eig) >= tol]


def design_gains(dyn: AgentDynamics, g: DiGraph, Q=None, R=None, safety_factor: float = 1.2) -> GainDesign:
    if not has_spanning_tree(g):
        raise NoSpanningTree("gain design needs a graph with a spanning tree")
    Q = np.eye(dyn.n_x) if Q is None else Q
    R = np.eye(dyn.n_u) if R is None else R
    _, K = solve_are_kleinman(dyn.A, dyn.B, Q, R)
    lam = nonzero_laplacian_eigenvalues(g)
    if lam.size == 0:
        # single agent: any coupling works
        return GainDesign(K, safety_factor)
    c = safety_factor / (2.0 * np.min(lam.real))
    return GainDesign(K, c)


def is_synchronizing(dyn: AgentDynamics, gains: GainDesign, g: DiGraph) -> bool:
    """A - c*lambda*B*K Hurwitz for every nonzero Laplacian eigenvalue."""
    for lam in nonzero_laplacian_eigenvalues(g):
        Acl = dyn.A - gains.c * lam * dyn.B @ gains.K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            return False
    return True


def local_tracking_error(g: DiGraph, x: np.ndarray, i: int, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """sum_j a_ij (x_j - x_i), plus sum_j a_ij w_ij when ``noise[j]`` holds w_ij."""
    x = np.asarray(x, dtype=float)
    a = g.weights[i]
    eta = a @ (x - x[i])
    if noise is not None:
        eta = eta + a @ np.asarray(noise, dtype=float)
    return eta


def nominal_control(gains: GainDesign, eta_i: np.ndarray) -> np.ndarray:
    return gains.cK @ np.asarray(eta_i, dtype=float)


def integrate_step(dyn: AgentDynamics, x_i: np.ndarray, u_i: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of x' = A x + B u with u held over the step."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A, bu = dyn.A, dyn.B @ np.atleast_1d(u_i)
    f = lambda x: A @ x + bu  # noqa: E731
    k1 = f(x_i)
    k2 = f(x_i + 0.5 * dt * k1)
    k3 = f(x_i + 0.5 * dt * k2)
    k4 = f(x_i + dt * k3)
    return x_i + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_matrices(dyn: AgentDynamics, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(Phi, Gamma) with RK4 step x+ = Phi x + Gamma u (exact algebraic expansion)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A, n = dyn.A, dyn.n_x
    I = np.eye(n)
    hA = dt * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    Phi = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    Gamma = dt * (I + hA / 2 + hA2 / 6 + hA3 / 24) @ dyn.B
    return Phi, Gamma
