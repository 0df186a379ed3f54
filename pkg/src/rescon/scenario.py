"""Scenario files: JSON documents mirroring :class:`rescon.sim.Scenario`.

Documents are validated against :data:`SCENARIO_SCHEMA` (unknown keys are
rejected) before they are turned into objects, and
``scenario_to_dict(scenario_from_dict(d))`` is a fixed point after one pass.
Named presets live in ``rescon/presets``.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .attack import AttackSpec, LTIGenerator, Waveform
from .detection import DetectorConfig
from .dynamics import AgentDynamics, GainDesign, NoiseModel
from .errors import ConfigError, SchemaError
from .graph import DiGraph
from .mitigation import TrustConfig
from .sim import DEFAULT_DIVERGENCE_CAP, Scenario

PRESETS = ("fig2", "fig3", "fig4", "fig6", "fig7", "fig9")

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_opt_vector = {"oneOf": [{"type": "null"}, _vector]}
_pos = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCENARIO_SCHEMA: dict = _obj({
    "name": {"type": "string"},
    "graph": _obj({
        "n": {"type": "integer", "minimum": 1},
        "edges": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 3,
                                             "items": {"type": "number"}}},
    }, ["n", "edges"]),
    "dynamics": _obj({"A": _matrix, "B": _matrix}, ["A", "B"]),
    "gains": {"oneOf": [{"type": "null"}, _obj({"K": _matrix, "c": {"type": "number"}}, ["K", "c"])]},
    "design": _obj({"Q": {"oneOf": [{"type": "null"}, _matrix]}, "R": {"oneOf": [{"type": "null"}, _matrix]}}),
    "noise": _obj({
        "covariance": _matrix,
        "per_edge": {"type": "array", "items": _obj({
            "tail": {"type": "integer"}, "head": {"type": "integer"}, "covariance": _matrix,
        }, ["tail", "head", "covariance"])},
    }, ["covariance"]),
    "attacks": {"type": "array", "items": _obj({
        "target": {"type": "integer", "minimum": 0},
        "channel": {"enum": ["actuator", "sensor", "link"]},
        "source": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
        "t_start": {"type": "number"},
        "t_stop": {"oneOf": [{"type": "null"}, {"type": "number"}]},
        "generator": {"oneOf": [
            _obj({
                "type": {"const": "waveform"},
                "kind": {"enum": ["sinusoid", "ramp", "exponential"]},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
                "direction": _opt_vector,
                "spectrum": {"oneOf": [{"type": "null"}, {"type": "array", "items": _vector}]},
            }, ["type", "kind"]),
            _obj({
                "type": {"const": "lti"},
                "Psi": _matrix, "f0": _vector, "output_map": _matrix,
            }, ["type", "Psi", "f0", "output_map"]),
        ]},
    }, ["target", "channel", "generator"])},
    "detector": _obj({
        "window": {"type": "integer", "minimum": 8},
        "gamma_imp": _opt_vector,
        "gamma_nonimp": _opt_vector,
        "nominal_cov": {"oneOf": [{"type": "null"}, _matrix]},
        "warmup": {"type": "number", "minimum": 0},
    }),
    "trust": _obj({
        "Delta": _opt_vector,
        "kappa1": _pos, "kappa2": _pos, "kappa3": _pos,
        "Lambda1": _pos, "Lambda2": _pos,
        "trust_window": {"type": "integer", "minimum": 8},
    }),
    "mitigation_enabled": {"type": "boolean"},
    "t_end": _pos,
    "dt": _pos,
    "x0": {"oneOf": [{"type": "null"}, _matrix]},
    "seed": {"type": "integer", "minimum": 0},
    "divergence_cap": _pos,
}, ["graph", "dynamics"])


def validate_document(doc: Any) -> None:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from exc


def _opt_array(v):
    return None if v is None else np.asarray(v, dtype=float)


def _list(v):
    return None if v is None else np.asarray(v, dtype=float).tolist()


def _generator_from_dict(d: dict):
    if d["type"] == "lti":
        return LTIGenerator(d["Psi"], d["f0"], d["output_map"])
    spectrum = d.get("spectrum")
    if spectrum is not None:
        spectrum = np.array([complex(re, im) for re, im in spectrum])
    return Waveform(d["kind"], dict(d.get("params", {})), d.get("direction"), spectrum)


def _generator_to_dict(gen) -> dict:
    if isinstance(gen, LTIGenerator):
        return {"type": "lti", "Psi": gen.Psi.tolist(), "f0": gen.f0.tolist(), "output_map": gen.output_map.tolist()}
    spec = None if gen.spectrum_override is None else [[z.real, z.imag] for z in gen.spectrum_override]
    return {"type": "waveform", "kind": gen.kind, "params": {k: float(v) for k, v in sorted(gen.params.items())},
            "direction": _list(gen.direction), "spectrum": spec}


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate and build a Scenario; raises SchemaError or ConfigError."""
    validate_document(doc)
    gd = doc["graph"]
    g = DiGraph.from_edges(gd["n"], [tuple(e) for e in gd["edges"]])
    dd = doc["dynamics"]
    dyn = AgentDynamics(dd["A"], dd["B"])
    gains = None
    if doc.get("gains") is not None:
        gains = GainDesign(doc["gains"]["K"], doc["gains"]["c"])
    design = doc.get("design", {})
    nd = doc.get("noise")
    noise = None
    if nd is not None:
        per_edge = {(e["tail"], e["head"]): e["covariance"] for e in nd.get("per_edge", [])}
        noise = NoiseModel(nd["covariance"], per_edge)
    attacks = [
        AttackSpec(a["target"], a["channel"], _generator_from_dict(a["generator"]),
                   float(a.get("t_start", 0.0)), a.get("t_stop"), a.get("source"))
        for a in doc.get("attacks", [])
    ]
    det = doc.get("detector", {})
    tr = doc.get("trust", {})
    try:
        detector_cfg = DetectorConfig(
            window=det.get("window", 200), gamma_imp=_opt_array(det.get("gamma_imp")),
            gamma_nonimp=_opt_array(det.get("gamma_nonimp")), nominal_cov=_opt_array(det.get("nominal_cov")),
            warmup=det.get("warmup", DetectorConfig.warmup),
        )
        trust_cfg = TrustConfig(Delta=_opt_array(tr.get("Delta")),
                                **{k: tr[k] for k in ("kappa1", "kappa2", "kappa3", "Lambda1", "Lambda2",
                                                      "trust_window") if k in tr})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(
        graph=g, dynamics=dyn, gains=gains, noise=noise, attacks=attacks,
        detector_cfg=detector_cfg, trust_cfg=trust_cfg,
        mitigation_enabled=doc.get("mitigation_enabled", False),
        t_end=doc.get("t_end", 40.0), dt=doc.get("dt", 1e-3), x0=_opt_array(doc.get("x0")),
        seed=doc.get("seed", 0), Q=_opt_array(design.get("Q")), R=_opt_array(design.get("R")),
        divergence_cap=doc.get("divergence_cap", DEFAULT_DIVERGENCE_CAP), name=doc.get("name", ""),
    )


def scenario_to_dict(s: Scenario) -> dict:
    g = s.graph
    noise = s.noise
    det, tr = s.detector_cfg, s.trust_cfg
    return {
        "name": s.name,
        "graph": {"n": g.n, "edges": [[j, i, w] for j, i, w in g.edges()]},
        "dynamics": {"A": s.dynamics.A.tolist(), "B": s.dynamics.B.tolist()},
        "gains": None if s.gains is None else {"K": s.gains.K.tolist(), "c": s.gains.c},
        "design": {"Q": _list(s.Q), "R": _list(s.R)},
        "noise": {"covariance": noise.covariance.tolist(),
                  "per_edge": [{"tail": j, "head": i, "covariance": m.tolist()}
                               for (j, i), m in sorted(noise.per_edge.items())]},
        "attacks": [{"target": a.target, "channel": a.channel, "source": a.source,
                     "t_start": float(a.t_start), "t_stop": a.t_stop,
                     "generator": _generator_to_dict(a.generator)} for a in s.attacks],
        "detector": {"window": det.window, "gamma_imp": _list(det.gamma_imp),
                     "gamma_nonimp": _list(det.gamma_nonimp), "nominal_cov": _list(det.nominal_cov),
                     "warmup": float(det.warmup)},
        "trust": {"Delta": _list(tr.Delta), "kappa1": tr.kappa1, "kappa2": tr.kappa2, "kappa3": tr.kappa3,
                  "Lambda1": tr.Lambda1, "Lambda2": tr.Lambda2, "trust_window": tr.trust_window},
        "mitigation_enabled": bool(s.mitigation_enabled),
        "t_end": float(s.t_end),
        "dt": float(s.dt),
        "x0": s.x0.tolist(),
        "seed": int(s.seed),
        "divergence_cap": float(s.divergence_cap),
    }


def load_scenario(path) -> Scenario:
    """Read a scenario file, or a preset when ``path`` names one."""
    if str(path) in PRESETS:
        return load_preset(str(path))
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise SchemaError(f"scenario file not found: {p}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read scenario {p}: {exc}") from exc
    return scenario_from_dict(doc)


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise SchemaError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("rescon.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_preset(name: str) -> Scenario:
    return scenario_from_dict(preset_document(name))


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
