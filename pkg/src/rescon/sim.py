"""Scenario execution: wires graph, dynamics, attacks, detection and mitigation
into a stepped simulation and records a full trace.

Agents are numbered from 0.  Each step, in order: sample channel noise,
evaluate attacks, form the exchanged (possibly corrupted) states, compute
tracking errors, update detectors and trust, apply the control, integrate.
The step loop itself lives in ``_engine``; this module prepares its inputs and
packages its outputs.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _engine
from .attack import AttackSpec, attack_series
from .detection import H1, DetectorConfig
from .dynamics import AgentDynamics, GainDesign, NoiseModel, design_gains, is_synchronizing, rk4_matrices
from .errors import ConfigError, EmptySubset, RefusesAttackScenario
from .graph import DiGraph, has_spanning_tree
from .mitigation import TrustConfig
from .stats import VAR_FLOOR

log = logging.getLogger(__name__)

DEFAULT_DIVERGENCE_CAP = 100.0
GAMMA_FLOOR = 1e-6


def default_x0(n: int) -> np.ndarray:
    """x_i(0) = (i + 1, -(i + 1)) / 2: a fixed spread, distinct per agent."""
    k = np.arange(1, n + 1, dtype=float)
    return 0.5 * np.stack([k, -k], axis=1)


@dataclass
class Scenario:
    graph: DiGraph
    dynamics: AgentDynamics
    gains: Optional[GainDesign] = None  # designed from (Q, R) when absent
    noise: Optional[NoiseModel] = None
    attacks: list = field(default_factory=list)
    detector_cfg: DetectorConfig = field(default_factory=DetectorConfig)
    trust_cfg: TrustConfig = field(default_factory=TrustConfig)
    mitigation_enabled: bool = False
    t_end: float = 40.0
    dt: float = 1e-3
    x0: Optional[np.ndarray] = None
    seed: int = 0
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    divergence_cap: float = DEFAULT_DIVERGENCE_CAP
    name: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not self.divergence_cap > 0:
            raise ConfigError("divergence_cap must be positive")
        n, nx = self.graph.n, self.dynamics.n_x
        if self.x0 is None:
            if nx != 2:
                raise ConfigError("default initial states assume 2-dimensional agents; give x0")
            self.x0 = default_x0(n)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (n, nx):
            raise ConfigError(f"x0 must have shape {(n, nx)}, got {self.x0.shape}")
        if self.noise is None:
            self.noise = NoiseModel(np.zeros((nx, nx)))
        if self.noise.covariance.shape != (nx, nx):
            raise ConfigError("noise covariance dimension does not match the agent state")
        for spec in self.attacks:
            spec.validate(self.dynamics, self.graph)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def resolved_gains(self) -> GainDesign:
        return self.gains if self.gains is not None else design_gains(self.dynamics, self.graph, self.Q, self.R)

    def attack_start(self) -> Optional[float]:
        return min((a.t_start for a in self.attacks), default=None)


@dataclass(eq=False)
class Trace:
    """Per-step records of one run.  Edge-indexed arrays follow ``tails``/``heads``."""

    times: np.ndarray
    x: np.ndarray  # (K, n, nx)
    eta_true: np.ndarray  # noise- and attack-free tracking error from the true states
    eta: np.ndarray  # tracking error the controller used (noisy; trust-weighted when mitigating)
    u: np.ndarray  # nominal control cK eta_true
    uc: np.ndarray  # applied (corrupted) input
    f: np.ndarray  # overall attack on each agent's input channel
    tau: np.ndarray
    phi: np.ndarray
    kl_imp: np.ndarray
    kl_nonimp: np.ndarray
    avg_imp: np.ndarray
    avg_nonimp: np.ndarray
    h_imp: np.ndarray
    h_nonimp: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    eta_raw: np.ndarray  # (K, E)
    omega: np.ndarray  # (K, E)
    d_link: np.ndarray  # (K, E)
    tails: np.ndarray
    heads: np.ndarray
    diverged: bool
    diverged_at: Optional[float]
    diverged_agents: np.ndarray  # (n,) bool: agent's state exceeded the cap at some step
    divergence_cap: float
    attack_start: Optional[float]
    seed: int
    name: str = ""

    @property
    def xi(self) -> np.ndarray:
        return np.minimum(self.c1, self.c2)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def trust_matrix(self, k: int = -1) -> np.ndarray:
        """Omega at step k arranged as an (n, n) matrix indexed [head, tail]."""
        out = np.zeros((self.n, self.n))
        out[self.heads, self.tails] = self.omega[k]
        return out

    def effective_graph(self, base: DiGraph, k: int = -1) -> DiGraph:
        """Graph with weights Omega_ij xi_j a_ij at step k."""
        return DiGraph(base.weights * self.trust_matrix(k) * self.xi[k][None, :])


# --------------------------------------------------------------------------
# input preparation

def _edge_arrays(g: DiGraph):
    heads, tails = np.nonzero(g.weights)
    return tails.astype(np.int64), heads.astype(np.int64), g.weights[heads, tails].astype(float)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(m)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_noise(s: Scenario, seed: int, tails, heads) -> np.ndarray:
    """Per-edge channel noise for every step, shape (K, E, nx), from one seeded Generator."""
    K1, E, nx = s.n_steps + 1, tails.size, s.dynamics.n_x
    roots = np.stack([_psd_sqrt(s.noise.edge_covariance(int(j), int(i))) for j, i in zip(tails, heads)]) \
        if E else np.zeros((0, nx, nx))
    z = np.random.default_rng(seed).standard_normal((K1, E, nx))
    return np.einsum("eab,keb->kea", roots, z)


def attack_arrays(s: Scenario, times: np.ndarray, tails, heads, cK: np.ndarray):
    """(sensor (K,n,nx), link (K,E,nx), actuator (K,n,nu), overall f (K,n,nu))."""
    n, nx, nu = s.graph.n, s.dynamics.n_x, s.dynamics.n_u
    K1 = times.size
    sensor = np.zeros((K1, n, nx))
    link = np.zeros((K1, tails.size, nx))
    actuator = np.zeros((K1, n, nu))
    for spec in s.attacks:
        sig = attack_series(spec, times, spec.channel_dim(s.dynamics))
        if spec.channel == "actuator":
            actuator[:, spec.target] += sig
        elif spec.channel == "sensor":
            sensor[:, spec.target] += sig
        else:
            e = np.flatnonzero((tails == spec.source) & (heads == spec.target))
            link[:, e[0]] += sig
    a = s.graph.weights[heads, tails]
    per_edge = a[None, :, None] * (sensor[:, tails] + link - sensor[:, heads])
    corruption = np.zeros((K1, n, nx))
    np.add.at(corruption, (slice(None), heads), per_edge)
    f = actuator + corruption @ cK.T
    return sensor, link, actuator, f


def nominal_covariances(s: Scenario) -> np.ndarray:
    if s.detector_cfg.nominal_cov is not None:
        cov = np.asarray(s.detector_cfg.nominal_cov, dtype=float)
        nx = s.dynamics.n_x
        return np.broadcast_to(cov, (s.graph.n, nx, nx)).copy()
    return np.stack([s.noise.aggregate_covariance(s.graph, i) for i in range(s.graph.n)])


def _per_agent(value, n: int, default: float) -> np.ndarray:
    if value is None:
        return np.full(n, default)
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


# --------------------------------------------------------------------------
# execution

def run_scenario(s: Scenario, seed: Optional[int] = None) -> Trace:
    """Run one seeded simulation.  Same scenario and seed give an identical trace."""
    seed = s.seed if seed is None else seed
    g, dyn = s.graph, s.dynamics
    gains = s.resolved_gains()
    if not has_spanning_tree(g):
        log.warning("graph has no spanning tree; consensus is not expected")
    elif not is_synchronizing(dyn, gains, g):
        log.warning("gains do not synchronize this graph")
    if s.mitigation_enabled and s.trust_cfg.Delta is None:
        raise ConfigError("mitigation needs a calibrated Delta; run calibration first")
    n = g.n
    tails, heads, a = _edge_arrays(g)
    times = s.times()
    cK = gains.cK
    Phi, Gamma = rk4_matrices(dyn, s.dt)
    noise = sample_noise(s, seed, tails, heads)
    sensor, link, actuator, f = attack_arrays(s, times, tails, heads, cK)
    det, tr = s.detector_cfg, s.trust_cfg
    has_gamma = det.calibrated
    out = _engine.run_loop(
        Phi, Gamma, cK, tails, heads, a, s.x0, noise, sensor, link, actuator, times,
        int(det.window), int(tr.trust_window), float(det.warmup),
        _per_agent(det.gamma_imp, n, np.inf), _per_agent(det.gamma_nonimp, n, np.inf), has_gamma,
        nominal_covariances(s), _per_agent(tr.Delta, n, 1.0),
        float(tr.kappa1), float(tr.kappa2), float(tr.kappa3), float(tr.Lambda1), float(tr.Lambda2),
        float(s.dt), bool(s.mitigation_enabled), VAR_FLOOR, float(s.divergence_cap),
    )
    (x, eta_true, eta, uc, tau, phi, kl_imp, kl_non, avg_imp, avg_non, h_imp, h_non,
     c1, c2, eraw, omega, dlink, diverged_at) = out
    cap = s.divergence_cap
    diverged = diverged_at >= 0
    diverged_agents = ~np.all(np.abs(x) <= cap, axis=(0, 2))
    if diverged:
        # keep the logged trajectories finite and bounded once the cap is crossed
        for arr in (x, eta_true, eta, uc):
            np.clip(np.nan_to_num(arr, nan=cap, posinf=cap, neginf=-cap), -cap, cap, out=arr)
    return Trace(
        times=times, x=x, eta_true=eta_true, eta=eta, u=eta_true @ cK.T, uc=uc, f=f,
        tau=tau, phi=phi, kl_imp=kl_imp, kl_nonimp=kl_non, avg_imp=avg_imp, avg_nonimp=avg_non,
        h_imp=h_imp, h_nonimp=h_non, c1=c1, c2=c2, eta_raw=eraw, omega=omega, d_link=dlink,
        tails=tails, heads=heads, diverged=bool(diverged),
        diverged_at=float(times[diverged_at]) if diverged else None, diverged_agents=diverged_agents,
        divergence_cap=cap, attack_start=s.attack_start(), seed=seed, name=s.name,
    )


def run_batch(s: Scenario, seeds: Sequence[int]) -> list[Trace]:
    return [run_scenario(s, seed) for seed in seeds]


# --------------------------------------------------------------------------
# metrics

def _tail_slice(trace: Trace, tail_fraction: float) -> slice:
    K = trace.times.size
    return slice(min(K - 1, int(math.floor(K * (1.0 - tail_fraction)))), K)


def consensus_metrics(trace: Trace, agent_subset: Sequence[int], tail_fraction: float = 0.1) -> dict:
    """Disagreement among ``agent_subset`` over the final ``tail_fraction`` of the run.

    Returns the max pairwise disagreement curve over the tail, its average, and
    each agent's average deviation from the subset mean.  If any agent of the
    subset crossed the divergence cap, disagreement is reported as infinite;
    divergence of agents outside the subset does not affect the result.
    """
    subset = list(agent_subset)
    if not subset:
        raise EmptySubset("consensus metrics need at least one agent")
    sl = _tail_slice(trace, tail_fraction)
    xs = trace.x[sl][:, subset]
    diff = xs[:, :, None, :] - xs[:, None, :, :]
    curve = np.linalg.norm(diff, axis=-1).max(axis=(1, 2))
    dev = np.linalg.norm(xs - xs.mean(axis=1, keepdims=True), axis=-1).mean(axis=0)
    if np.any(trace.diverged_agents[subset]):
        return {"max_disagreement": np.full_like(curve, np.inf), "tail_average": math.inf,
                "deviation": {i: math.inf for i in subset}, "diverged": True}
    return {"max_disagreement": curve, "tail_average": float(curve.mean()),
            "deviation": {i: float(v) for i, v in zip(subset, dev)}, "diverged": False}


def detection_latency(trace: Trace, agent: int, detector: str = "any") -> Optional[float]:
    """Seconds from attack onset to the agent's first H1, or None if it never fires."""
    if detector not in ("imp", "nonimp", "any"):
        raise ValueError(f"unknown detector {detector!r}")
    if trace.attack_start is None:
        return None
    if detector == "imp":
        h = trace.h_imp[:, agent]
    elif detector == "nonimp":
        h = trace.h_nonimp[:, agent]
    else:
        h = np.maximum(trace.h_imp[:, agent], trace.h_nonimp[:, agent])
    idx = np.flatnonzero((trace.times >= trace.attack_start) & (h == H1))
    return float(trace.times[idx[0]] - trace.attack_start) if idx.size else None


def tail_mean_norm(series: np.ndarray, times: np.ndarray, last_seconds: float) -> np.ndarray:
    """Per-agent time average of ||series_i(t)|| over the final ``last_seconds``."""
    mask = times >= times[-1] - last_seconds - 1e-12
    return np.linalg.norm(series[mask], axis=-1).mean(axis=0)


def summarize(trace: Trace, intact: Optional[Sequence[int]] = None) -> dict:
    intact = list(range(trace.n)) if intact is None else list(intact)
    cm = consensus_metrics(trace, intact)
    return {
        "name": trace.name,
        "seed": trace.seed,
        "steps": int(trace.times.size),
        "t_end": float(trace.times[-1]),
        "diverged": trace.diverged,
        "diverged_at": trace.diverged_at,
        "diverged_agents": [int(i) for i in np.flatnonzero(trace.diverged_agents)],
        "divergence_cap": trace.divergence_cap,
        "consensus_subset": intact,
        "consensus_tail_average": cm["tail_average"],
        "deviation_from_subset_mean": {str(k): v for k, v in cm["deviation"].items()},
        "attack_start": trace.attack_start,
        "detection_latency": {
            str(i): {"imp": detection_latency(trace, i, "imp"), "nonimp": detection_latency(trace, i, "nonimp")}
            for i in range(trace.n)
        },
        "max_abs_state": float(np.abs(trace.x).max()),
        "final_self_belief": [float(v) for v in trace.xi[-1]],
        "final_trust": {f"{int(j)}->{int(i)}": float(w) for j, i, w in zip(trace.tails, trace.heads, trace.omega[-1])},
    }


# --------------------------------------------------------------------------
# export

def trace_columns(trace: Trace) -> list[str]:
    n, nx, nu = trace.n, trace.x.shape[2], trace.uc.shape[2]
    cols = ["t"]
    cols += [f"x{i}_{a}" for i in range(n) for a in range(nx)]
    cols += [f"eta{i}_{a}" for i in range(n) for a in range(nx)]
    cols += [f"u{i}_{r}" for i in range(n) for r in range(nu)]
    cols += [f"uc{i}_{r}" for i in range(n) for r in range(nu)]
    cols += [f"f{i}_{r}" for i in range(n) for r in range(nu)]
    cols += [f"avg_imp{i}" for i in range(n)] + [f"avg_nonimp{i}" for i in range(n)]
    cols += [f"h_imp{i}" for i in range(n)] + [f"h_nonimp{i}" for i in range(n)]
    cols += [f"xi{i}" for i in range(n)]
    cols += [f"omega{int(j)}_{int(i)}" for j, i in zip(trace.tails, trace.heads)]
    return cols


def trace_matrix(trace: Trace) -> np.ndarray:
    K = trace.times.size
    parts = [trace.times[:, None], trace.x.reshape(K, -1), trace.eta.reshape(K, -1), trace.u.reshape(K, -1),
             trace.uc.reshape(K, -1), trace.f.reshape(K, -1), trace.avg_imp, trace.avg_nonimp,
             trace.h_imp, trace.h_nonimp, trace.xi, trace.omega]
    return np.hstack([np.asarray(p, dtype=float) for p in parts])


def write_trace_csv(trace: Trace, path) -> None:
    """One row per step; column order from :func:`trace_columns`."""
    buf = io.StringIO()
    np.savetxt(buf, trace_matrix(trace), delimiter=",", fmt="%.10g",
               header=",".join(trace_columns(trace)), comments="")
    Path(path).write_text(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    return obj


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


def write_plot_data(trace: Trace, out_dir) -> list[Path]:
    """Plot-ready CSVs: states, windowed KL averages and trust over time."""
    out_dir = Path(out_dir)
    n = trace.n
    files = {
        "states.csv": (["t"] + [f"x{i}_{a}" for i in range(n) for a in range(trace.x.shape[2])],
                       np.hstack([trace.times[:, None], trace.x.reshape(trace.times.size, -1)])),
        "kl.csv": (["t"] + [f"avg_imp{i}" for i in range(n)] + [f"avg_nonimp{i}" for i in range(n)],
                   np.hstack([trace.times[:, None], trace.avg_imp, trace.avg_nonimp])),
        "trust.csv": (["t"] + [f"xi{i}" for i in range(n)]
                      + [f"omega{int(j)}_{int(i)}" for j, i in zip(trace.tails, trace.heads)],
                      np.hstack([trace.times[:, None], trace.xi, trace.omega])),
    }
    written = []
    for name, (cols, data) in files.items():
        with open(out_dir / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            np.savetxt(fh, data, delimiter=",", fmt="%.10g")
        written.append(out_dir / name)
    return written


# --------------------------------------------------------------------------
# calibration

@dataclass
class Thresholds:
    gamma_imp: np.ndarray
    gamma_nonimp: np.ndarray
    Delta: np.ndarray
    runs: int
    factor: float
    delta_factor: float

    def to_dict(self) -> dict:
        return {"gamma_imp": [float(v) for v in self.gamma_imp],
                "gamma_nonimp": [float(v) for v in self.gamma_nonimp],
                "Delta": [float(v) for v in self.Delta],
                "runs": self.runs, "factor": self.factor, "delta_factor": self.delta_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "Thresholds":
        try:
            return cls(np.asarray(d["gamma_imp"], float), np.asarray(d["gamma_nonimp"], float),
                       np.asarray(d["Delta"], float), int(d["runs"]), float(d["factor"]),
                       float(d.get("delta_factor", 10.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed thresholds: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Thresholds":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def apply(self, s: Scenario) -> Scenario:
        n = s.graph.n
        if self.gamma_imp.size != n:
            raise ConfigError(f"thresholds are for {self.gamma_imp.size} agents, scenario has {n}")
        det = replace(s.detector_cfg, gamma_imp=self.gamma_imp, gamma_nonimp=self.gamma_nonimp)
        tr = replace(s.trust_cfg, Delta=self.Delta)
        return replace(s, detector_cfg=det, trust_cfg=tr)


def calibrate(s: Scenario, runs: int = 20, factor: float = 3.0, delta_factor: float = 10.0,
              base_seed: int = 1000) -> Thresholds:
    """Thresholds from ``runs`` seeded attack-free runs.

    gamma = factor * (max post-warmup windowed average); Delta = delta_factor *
    (max post-warmup per-step divergence over both detectors), so that
    attack-free confidences stay near 1.  Both are floored at a small positive
    value for agents whose statistics are identically zero.
    """
    if s.attacks:
        raise RefusesAttackScenario("calibration needs an attack-free scenario")
    if runs < 1:
        raise ConfigError("calibration needs at least one run")
    if not factor > 0 or not delta_factor > 0:
        raise ConfigError("calibration factors must be positive")
    base = replace(s, mitigation_enabled=False,
                   detector_cfg=replace(s.detector_cfg, gamma_imp=None, gamma_nonimp=None))
    n = s.graph.n
    max_imp = np.zeros(n)
    max_non = np.zeros(n)
    max_step = np.zeros(n)
    for r in range(runs):
        tr = run_scenario(base, base_seed + r)
        post = tr.times > s.detector_cfg.warmup
        max_imp = np.maximum(max_imp, tr.avg_imp[post].max(axis=0))
        max_non = np.maximum(max_non, tr.avg_nonimp[post].max(axis=0))
        max_step = np.maximum(max_step, np.maximum(tr.kl_imp[post], tr.kl_nonimp[post]).max(axis=0))
    return Thresholds(
        gamma_imp=factor * np.maximum(max_imp, GAMMA_FLOOR),
        gamma_nonimp=factor * np.maximum(max_non, GAMMA_FLOOR),
        Delta=delta_factor * np.maximum(max_step, GAMMA_FLOOR),
        runs=runs, factor=factor, delta_factor=delta_factor,
    )


def false_positive_rates(s: Scenario, seeds: Sequence[int]) -> np.ndarray:
    """Per-agent fraction of post-warmup steps with either detector at H1, attack-free."""
    if s.attacks:
        raise RefusesAttackScenario("false-positive rates need an attack-free scenario")
    hits = None
    steps = 0
    for seed in seeds:
        tr = run_scenario(s, seed)
        post = tr.times > s.detector_cfg.warmup
        h = np.maximum(tr.h_imp[post], tr.h_nonimp[post]).sum(axis=0)
        hits = h if hits is None else hits + h
        steps += int(post.sum())
    return hits / steps
