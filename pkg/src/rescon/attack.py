"""Attack generators, injection channels and the analytical attack classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .dynamics import AgentDynamics, GainDesign, classify_A_spectrum
from .errors import ConfigError
from .graph import DiGraph

EIG_MATCH_TOL = 1e-8
CHANNELS = ("actuator", "sensor", "link")


@dataclass(frozen=True, eq=False)
class LTIGenerator:
    """Exosystem f' = Psi f, f(t_start) = f0, observed through ``output_map``."""

    Psi: np.ndarray
    f0: np.ndarray
    output_map: np.ndarray

    def __post_init__(self):
        Psi = np.atleast_2d(np.asarray(self.Psi, dtype=float))
        f0 = np.asarray(self.f0, dtype=float).reshape(-1)
        C = np.atleast_2d(np.asarray(self.output_map, dtype=float))
        if Psi.shape != (f0.size, f0.size) or C.shape[1] != f0.size:
            raise ConfigError(f"inconsistent LTI generator shapes Psi{Psi.shape} f0{f0.shape} C{C.shape}")
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "output_map", C)

    @property
    def dim(self) -> int:
        return self.output_map.shape[0]

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvals(self.Psi)

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        """Closed form C exp(Psi tau) f0 for an array of elapsed times; shape (len(tau), dim)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        lam, V = np.linalg.eig(self.Psi)
        if np.linalg.cond(V) < 1e8:
            coeff = np.linalg.solve(V, self.f0.astype(complex))
            modes = np.exp(np.outer(tau, lam)) * coeff
            return np.real(modes @ (self.output_map @ V).T)
        # defective Psi
        return np.array([self.output_map @ scipy.linalg.expm(self.Psi * s) @ self.f0 for s in tau])


@dataclass(frozen=True, eq=False)
class Waveform:
    """Named closed-form signal ``direction * w(t)`` in absolute time.

    kinds: ``sinusoid`` offset + amplitude*sin(omega*t + phase);
    ``ramp`` offset + slope*t; ``exponential`` amplitude*exp(rate*t).
    The generator spectrum is derived from the parameters unless ``spectrum``
    declares it explicitly.
    """

    kind: str
    params: dict = field(default_factory=dict)
    direction: Optional[np.ndarray] = None
    spectrum_override: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("sinusoid", "ramp", "exponential"):
            raise ConfigError(f"unknown waveform kind {self.kind!r}")
        if self.direction is not None:
            object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float).reshape(-1))
        if self.spectrum_override is not None:
            object.__setattr__(self, "spectrum_override", np.asarray(self.spectrum_override, dtype=complex).reshape(-1))

    @property
    def dim(self) -> Optional[int]:
        return None if self.direction is None else self.direction.size

    def scalar(self, t: np.ndarray) -> np.ndarray:
        p = self.params
        t = np.asarray(t, dtype=float)
        if self.kind == "sinusoid":
            return p.get("offset", 0.0) + p.get("amplitude", 1.0) * np.sin(p.get("omega", 1.0) * t + p.get("phase", 0.0))
        if self.kind == "ramp":
            return p.get("offset", 0.0) + p.get("slope", 1.0) * t
        return p.get("amplitude", 1.0) * np.exp(p.get("rate", 0.0) * t)

    def spectrum(self) -> np.ndarray:
        if self.spectrum_override is not None:
            return self.spectrum_override
        p = self.params
        eig: list[complex] = []
        if self.kind == "sinusoid":
            if p.get("offset", 0.0) != 0.0:
                eig.append(0.0)
            w = p.get("omega", 1.0)
            if p.get("amplitude", 1.0) != 0.0:
                eig.extend([1j * w, -1j * w] if w != 0 else [0.0])
        elif self.kind == "ramp":
            eig.extend([0.0, 0.0] if p.get("slope", 1.0) != 0.0 else [0.0])
        else:
            eig.append(p.get("rate", 0.0))
        return np.array(eig, dtype=complex)


Generator = Union[LTIGenerator, Waveform]


@dataclass(frozen=True, eq=False)
class AttackSpec:
    target: int
    channel: str
    generator: Generator
    t_start: float = 0.0
    t_stop: Optional[float] = None
    source: Optional[int] = None  # link attacks: the corrupted edge is source -> target

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ConfigError(f"channel must be one of {CHANNELS}, got {self.channel!r}")
        if self.channel == "link" and self.source is None:
            raise ConfigError("link attacks need a source agent")
        if self.t_stop is not None and self.t_stop <= self.t_start:
            raise ConfigError("t_stop must come after t_start")

    def channel_dim(self, dyn: AgentDynamics) -> int:
        return dyn.n_u if self.channel == "actuator" else dyn.n_x

    def validate(self, dyn: AgentDynamics, g: DiGraph) -> None:
        if not 0 <= self.target < g.n:
            raise ConfigError(f"attack target {self.target} out of range")
        if self.channel == "link" and g.weights[self.target, self.source] == 0:
            raise ConfigError(f"no edge {self.source}->{self.target} to attack")
        dim = self.generator.dim
        if dim is not None and dim != self.channel_dim(dyn):
            raise ConfigError(f"{self.channel} attack on agent {self.target}: generator dim {dim}, "
                              f"channel dim {self.channel_dim(dyn)}")


@dataclass(frozen=True, eq=False)
class AttackClassification:
    kind: str  # "IMP" or "nonIMP"
    E_psi: np.ndarray
    shared_marginal: np.ndarray


def attack_series(spec: AttackSpec, times: np.ndarray, dim: int) -> np.ndarray:
    """Attack signal at each time in ``times``; shape (len(times), dim)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.zeros((times.size, dim))
    active = times >= spec.t_start
    if spec.t_stop is not None:
        active &= times < spec.t_stop
    if not np.any(active):
        return out
    gen = spec.generator
    if isinstance(gen, LTIGenerator):
        out[active] = gen.evaluate(times[active] - spec.t_start)
    else:
        direction = np.ones(dim) if gen.direction is None else gen.direction
        out[active] = np.outer(gen.scalar(times[active]), direction)
    return out


def attack_signal(spec: AttackSpec, t: float, dim: Optional[int] = None) -> np.ndarray:
    if dim is None:
        dim = spec.generator.dim or 1
    return attack_series(spec, np.array([t]), dim)[0]


def compose_overall_attack(specs: Sequence[AttackSpec], g: DiGraph, gains: GainDesign,
                           dyn: AgentDynamics, t: float) -> np.ndarray:
    """Overall attack f_i entering each agent's input channel; shape (n, n_u).

    f_i = beta_i u_i^d + cK sum_j a_ij (alpha_j x_j^d - alpha_i x_i^d), with link
    attacks acting like a sensor attack seen on a single edge.
    """
    n = g.n
    f = np.zeros((n, dyn.n_u))
    cK = gains.cK
    for s in specs:
        sig = attack_signal(s, t, s.channel_dim(dyn))
        i = s.target
        if s.channel == "actuator":
            f[i] += sig
        elif s.channel == "sensor":
            for k in g.out_neighbors(i):
                f[k] += g.weights[k, i] * (cK @ sig)
            f[i] -= g.weights[i].sum() * (cK @ sig)
        else:
            f[i] += g.weights[i, s.source] * (cK @ sig)
    return f


def _multiset_subset(sub: np.ndarray, sup: np.ndarray, tol: float) -> bool:
    if sub.size == 0:
        return True
    if sub.size > sup.size:
        return False
    cost = np.abs(sub[:, None] - sup[None, :])
    rows, cols = linear_sum_assignment(cost)
    return bool(np.all(cost[rows, cols] <= tol))


def classify_attack(spec: AttackSpec, dyn: AgentDynamics, tol: float = EIG_MATCH_TOL) -> AttackClassification:
    E_psi = spec.generator.spectrum()
    spec_A = classify_A_spectrum(dyn)
    kind = "IMP" if _multiset_subset(E_psi, spec_A.eigenvalues, tol) else "nonIMP"
    shared = [lam for lam in E_psi if np.any(np.abs(spec_A.marginal - lam) <= tol)]
    return AttackClassification(kind, E_psi, np.array(shared, dtype=complex))


def steady_state_residual(p: np.ndarray, f: np.ndarray) -> float:
    """|| sum_k p_k f_k ||; zero is the condition for a steady state under IMP attacks."""
    f = np.asarray(f, dtype=float)
    return float(np.linalg.norm(np.tensordot(np.asarray(p, dtype=float), f, axes=(0, 0))))


def max_steady_state_residual(p: np.ndarray, specs: Sequence[AttackSpec], g: DiGraph, gains: GainDesign,
                              dyn: AgentDynamics, times: np.ndarray) -> float:
    return max(steady_state_residual(p, compose_overall_attack(specs, g, gains, dyn, t)) for t in times)


def predicts_instability(cls: AttackClassification, residual_nonzero: bool) -> bool:
    return bool(residual_nonzero and cls.shared_marginal.size > 0)
