"""Reproduction suite: the nine acceptance checks, shared by the CLI
``reproduce`` command and ``tests/test_acceptance.py``.

Agents are 0-indexed here; the check titles use the same numbering.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .attack import classify_attack, max_steady_state_residual, predicts_instability
from .graph import (
    has_spanning_tree,
    is_r_robust,
    laplacian,
    random_digraph,
    root_partition,
    zero_eigenvalue_multiplicity,
)
from .scenario import load_preset
from .sim import (
    Scenario,
    Thresholds,
    calibrate,
    consensus_metrics,
    detection_latency,
    false_positive_rates,
    run_scenario,
    tail_mean_norm,
    write_trace_csv,
)
from .stats import FoldedGaussianParams, folded_density, folded_gaussian_kl, folded_support, kl_numeric_oracle

INTACT_FIG4 = [0, 1, 2]  # upstream of the compromised agent
INTACT_MITIGATION = [0, 1, 2, 3]  # every agent except the compromised one
COMPROMISED = 4
DETECTING_AGENT = 3
SPECTRAL_TOL = 1e-9


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict
    expected: str
    seconds: float = 0.0

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.title}: {vals} (expected {self.expected})"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in np.asarray(v).tolist()) + "]"
    return str(v)


@dataclass
class AcceptanceSuite:
    """Runs the checks against the bundled presets.

    ``transform`` is applied to every preset scenario before it runs, which is
    how a tampered configuration (for example zero coupling) is exercised.
    """

    transform: Callable[[Scenario], Scenario] = lambda s: s
    calibration_runs: int = 20
    calibration_factor: float = 3.0
    false_positive_seeds: int = 50
    noise_seeds: tuple = (0, 1, 2)
    _thresholds: Optional[Thresholds] = field(default=None, init=False, repr=False)

    def preset(self, name: str) -> Scenario:
        return self.transform(load_preset(name))

    def thresholds(self) -> Thresholds:
        if self._thresholds is None:
            self._thresholds = calibrate(self.preset("fig2"), self.calibration_runs, self.calibration_factor)
        return self._thresholds

    # ------------------------------------------------------------------
    def nominal_consensus(self) -> CriterionResult:
        s = self.preset("fig2")
        run_scenario(replace(s, t_end=0.01))  # load compiled kernels before timing
        t0 = time.perf_counter()
        tr = run_scenario(s)
        runtime = time.perf_counter() - t0
        dis = consensus_metrics(tr, range(tr.n))["tail_average"]
        u = float(tail_mean_norm(tr.u, tr.times, 5.0).max())
        ok = dis < 1e-3 and u < 1e-3 and runtime < 2.0
        return CriterionResult(1, "Nominal consensus", ok,
                               {"tail_disagreement": dis, "max_mean_u_last5s": u, "runtime_s": runtime},
                               "disagreement < 1e-3, mean ||u_i|| < 1e-3, runtime < 2 s")

    def root_destabilization(self) -> CriterionResult:
        s = self.preset("fig3")
        tr = run_scenario(s)
        spec = s.attacks[0]
        gains = s.resolved_gains()
        from .graph import left_zero_eigenvector  # noqa: PLC0415
        p = left_zero_eigenvector(s.graph)
        grid = np.linspace(spec.t_start, s.t_end, 401)
        residual = max_steady_state_residual(p, s.attacks, s.graph, gains, s.dynamics, grid)
        cls = classify_attack(spec, s.dynamics)
        predicted = predicts_instability(cls, residual > 1e-9)
        by_60 = tr.diverged and tr.diverged_at is not None and tr.diverged_at <= 60.0
        return CriterionResult(2, "Root attack destabilizes", bool(by_60 and predicted),
                               {"diverged": tr.diverged, "diverged_at": tr.diverged_at, "class": cls.kind,
                                "residual": residual, "predicts_instability": predicted},
                               "diverged by t=60 and predicts_instability true")

    def localization(self) -> CriterionResult:
        s = self.preset("fig4")
        clean = replace(s, attacks=[])
        dis, dev, diverged = [], [], False
        eta_att = np.zeros(len(INTACT_FIG4))
        eta_base = np.zeros(len(INTACT_FIG4))
        for seed in self.noise_seeds:
            tr = run_scenario(s, seed)
            base = run_scenario(clean, seed)
            diverged |= tr.diverged
            dis.append(consensus_metrics(tr, INTACT_FIG4)["tail_average"])
            sl = tr.times >= tr.times[-1] * 0.9
            gap = tr.x[sl, DETECTING_AGENT] - tr.x[sl][:, INTACT_FIG4].mean(axis=1)
            dev.append(float(np.linalg.norm(gap, axis=-1).mean()))
            post = tr.times >= s.attacks[0].t_start
            eta_att += np.linalg.norm(tr.eta_true[post][:, INTACT_FIG4], axis=-1).mean(axis=0)
            eta_base += np.linalg.norm(base.eta_true[post][:, INTACT_FIG4], axis=-1).mean(axis=0)
        eta_att /= len(self.noise_seeds)
        eta_base /= len(self.noise_seeds)
        # an agent without in-neighbors has identically zero tracking error in both runs
        eta_ok = all(a < 5 * b or (a == 0.0 and b == 0.0) for a, b in zip(eta_att, eta_base))
        ok = (not diverged) and max(dis) < 1e-2 and min(dev) > 0.1 and eta_ok
        ratio = [a / b if b > 0 else (1.0 if a == 0 else math.inf) for a, b in zip(eta_att, eta_base)]
        return CriterionResult(3, "Non-root attack stays local", ok,
                               {"diverged": diverged, "intact_disagreement": max(dis),
                                "agent3_gap": min(dev), "eta_ratio_intact": ratio},
                               "no divergence, intact disagreement < 1e-2, agent-3 gap > 0.1, eta ratio < 5")

    def nonimp_no_steady_state(self) -> CriterionResult:
        s = self.preset("fig7")
        tr = run_scenario(s)
        base = run_scenario(replace(s, attacks=[]))
        att = float(tail_mean_norm(tr.uc, tr.times, 10.0)[COMPROMISED])
        ref = float(tail_mean_norm(base.uc, base.times, 10.0)[COMPROMISED])
        return CriterionResult(4, "Non-IMP attack has no steady state", att > 10 * ref,
                               {"mean_uc4_last10s": att, "attack_free": ref, "ratio": att / ref},
                               "ratio > 10")

    def detection(self) -> CriterionResult:
        th = self.thresholds()
        lat_imp = detection_latency(run_scenario(th.apply(self.preset("fig4"))), DETECTING_AGENT, "imp")
        lat_non = detection_latency(run_scenario(th.apply(self.preset("fig7"))), DETECTING_AGENT, "nonimp")
        fp = false_positive_rates(th.apply(self.preset("fig2")), range(self.false_positive_seeds))
        ok = (lat_imp is not None and lat_imp < 0.5 and lat_non is not None and lat_non < 0.5
              and float(fp.max()) < 0.01)
        return CriterionResult(5, "Detection latency and false positives", ok,
                               {"latency_imp_s": lat_imp, "latency_nonimp_s": lat_non,
                                "max_false_positive_rate": float(fp.max())},
                               "both latencies < 0.5 s, false-positive rate < 1% per agent")

    def mitigation(self) -> CriterionResult:
        th = self.thresholds()
        measured, ok = {}, True
        for name in ("fig6", "fig9"):
            s = th.apply(self.preset(name))
            tr = run_scenario(s)
            dis = consensus_metrics(tr, INTACT_MITIGATION)["tail_average"]
            tree = has_spanning_tree(tr.effective_graph(s.graph).subgraph(INTACT_MITIGATION))
            measured[f"{name}_intact_disagreement"] = dis
            measured[f"{name}_intact_spanning_tree"] = tree
            ok &= dis < 1e-2 and tree
        s = replace(th.apply(self.preset("fig2")), mitigation_enabled=True)
        tr = run_scenario(s)
        dis = consensus_metrics(tr, range(tr.n))["tail_average"]
        u = float(tail_mean_norm(tr.u, tr.times, 5.0).max())
        post = tr.times > s.detector_cfg.warmup
        weight = float((tr.omega * tr.xi[:, tr.tails])[post].min())
        measured.update({"attack_free_disagreement": dis, "attack_free_mean_u": u, "min_trust_weight": weight})
        ok &= dis < 1e-3 and u < 1e-3 and weight > 0.8
        return CriterionResult(6, "Trust-weighted mitigation", bool(ok), measured,
                               "intact disagreement < 1e-2 with spanning tree; attack-free run meets check 1, "
                               "trust weights > 0.8")

    def folded_kl_numerics(self, pairs: int = 100, seed: int = 7) -> CriterionResult:
        rng = np.random.default_rng(seed)
        worst = 0.0
        failures = 0
        for _ in range(pairs):
            s1, s2 = np.exp(rng.uniform(np.log(0.1), np.log(10.0), 2))
            r1, r2 = rng.uniform(0.0, 0.3, 2)
            p = FoldedGaussianParams(float(r1 * np.sqrt(s1)), float(s1))
            q = FoldedGaussianParams(float(r2 * np.sqrt(s2)), float(s2))
            ref = kl_numeric_oracle(folded_density(p), folded_density(q), folded_support(p, q))
            err = abs(folded_gaussian_kl(p, q) - ref)
            tol = max(0.1 * abs(ref), 0.02)
            worst = max(worst, err / tol)
            failures += err > tol
        z = FoldedGaussianParams(0.0, 1.0)
        zero = abs(folded_gaussian_kl(z, z))
        return CriterionResult(7, "Folded-Gaussian KL vs quadrature", failures == 0 and zero < 1e-12,
                               {"pairs": pairs, "failures": failures, "worst_error_over_tolerance": worst,
                                "equal_zero_mean_kl": zero},
                               "every pair within max(10% rel, 0.02 abs); equal zero-mean KL < 1e-12")

    def graph_oracles(self, graphs: int = 100, seed: int = 11) -> CriterionResult:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        tree_eig = blocks = robust = 0
        with_tree = 0
        for _ in range(graphs):
            n = int(rng.integers(2, 7))
            g = random_digraph(n, float(rng.uniform(0.15, 0.7)), rng, weighted=bool(rng.integers(2)))
            tree = has_spanning_tree(g)
            tree_eig += tree == (zero_eigenvalue_multiplicity(laplacian(g)) == 1)
            robust += tree == is_r_robust(g, 1)
            if tree:
                with_tree += 1
                part = root_partition(g)
                ok_rr = np.min(np.abs(np.linalg.eigvals(part.L_rr))) < SPECTRAL_TOL
                ok_nr = part.L_nr_nr.size == 0 or np.min(np.linalg.eigvals(part.L_nr_nr).real) > SPECTRAL_TOL
                ok_zero = not np.any(part.L_rnr_zero_block)
                blocks += bool(ok_rr and ok_nr and ok_zero)
            else:
                blocks += 1
        runtime = time.perf_counter() - t0
        ok = tree_eig == graphs and blocks == graphs and robust == graphs and runtime < 10.0
        return CriterionResult(8, "Graph oracles", ok,
                               {"graphs": graphs, "with_spanning_tree": with_tree, "tree_vs_zero_eig": tree_eig,
                                "root_block_spectra": blocks, "tree_vs_1_robust": robust, "runtime_s": runtime},
                               "all agree, runtime < 10 s")

    def determinism(self) -> CriterionResult:
        s = self.preset("fig4")
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp, "a.csv"), Path(tmp, "b.csv")
            write_trace_csv(run_scenario(s, 42), a)
            write_trace_csv(run_scenario(s, 42), b)
            same = filecmp.cmp(a, b, shallow=False)
            size = a.stat().st_size
        return CriterionResult(9, "Deterministic traces", same, {"identical": same, "bytes": size},
                               "byte-identical trace.csv")

    # ------------------------------------------------------------------
    def checks(self) -> list[Callable[[], CriterionResult]]:
        return [self.nominal_consensus, self.root_destabilization, self.localization,
                self.nonimp_no_steady_state, self.detection, self.mitigation,
                self.folded_kl_numerics, self.graph_oracles, self.determinism]

    def run(self, only: Optional[set[int]] = None, echo: Optional[Callable[[str], None]] = None) -> list[CriterionResult]:
        results = []
        for number, check in enumerate(self.checks(), start=1):
            if only is not None and number not in only:
                continue
            t0 = time.perf_counter()
            res = check()
            res.seconds = time.perf_counter() - t0
            results.append(res)
            if echo is not None:
                echo(res.line())
        return results
