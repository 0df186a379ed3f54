"""Command-line front end.

    rescon run SCENARIO [--seed N] [--out-dir D] [--mitigate on|off] [--thresholds F]
    rescon calibrate SCENARIO [--runs M] [--factor k]
    rescon reproduce [--suite paper] [--list] [--only 1,5]
    rescon sweep SCENARIO --param trust.Lambda1 --values 0.5,1,2 [--seeds 0,1]

SCENARIO is a JSON file or a preset name (fig2, fig3, fig4, fig6, fig7, fig9).
Exit codes: 0 ok, 2 input error, 3 configuration error, 4 acceptance failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .acceptance import AcceptanceSuite
from .errors import ConfigError, RefusesAttackScenario, ResconError, SchemaError
from .plots import write_trace_charts
from .scenario import PRESETS, load_scenario, preset_document, scenario_from_dict, scenario_to_dict
from .sim import (
    Thresholds,
    calibrate,
    run_scenario,
    summarize,
    write_plot_data,
    write_summary_json,
    write_trace_csv,
)

log = logging.getLogger("rescon")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _out_dir(arg) -> Path:
    path = Path(arg or os.environ.get("RESCON_OUT_DIR", "rescon-out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_overrides(s, args):
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "t_end", None) is not None:
        changes["t_end"] = args.t_end
    if getattr(args, "mitigate", None) is not None:
        changes["mitigation_enabled"] = args.mitigate == "on"
    if changes:
        s = replace(s, **changes)
    if getattr(args, "thresholds", None):
        try:
            s = Thresholds.load(args.thresholds).apply(s)
        except FileNotFoundError as exc:
            raise SchemaError(f"thresholds file not found: {args.thresholds}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"thresholds file is not JSON: {exc}") from exc
    return s


def _ensure_calibrated(s, out: Path):
    if not s.mitigation_enabled or s.trust_cfg.Delta is not None:
        return s
    log.info("mitigation requested without thresholds; calibrating on the attack-free scenario")
    th = calibrate(replace(s, attacks=[]))
    th.save(out / "thresholds.json")
    return th.apply(s)


def cmd_run(args) -> int:
    s = _apply_overrides(load_scenario(args.scenario), args)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    out = _out_dir(args.out_dir)
    s = _ensure_calibrated(s, out)
    tr = run_scenario(s)
    write_trace_csv(tr, out / "trace.csv")
    intact = [i for i in range(s.graph.n) if i not in {a.target for a in s.attacks}]
    write_summary_json(summarize(tr, intact), out / "summary.json")
    write_plot_data(tr, out)
    if not args.no_svg:
        write_trace_charts(tr, out)
    print(f"{s.name or args.scenario}: diverged={tr.diverged} -> {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    s = _apply_overrides(load_scenario(args.scenario), args)
    th = calibrate(s, runs=args.runs, factor=args.factor, delta_factor=args.delta_factor)
    out = Path(args.out) if args.out else _out_dir(args.out_dir) / "thresholds.json"
    th.save(out)
    print(json.dumps(th.to_dict(), indent=2))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.list:
        for name in PRESETS:
            print(name)
        return EXIT_OK
    if args.suite != "paper":
        raise SchemaError(f"unknown suite {args.suite!r}")
    only = {int(v) for v in args.only.split(",")} if args.only else None
    results = AcceptanceSuite().run(only=only, echo=print)
    out = _out_dir(args.out_dir)
    report = [{"number": r.number, "title": r.title, "passed": r.passed, "expected": r.expected,
               "measured": r.measured, "seconds": r.seconds} for r in results]
    write_summary_json({"criteria": report, "all_passed": all(r.passed for r in results)}, out / "report.json")
    (out / "report.txt").write_text("\n".join(r.line() for r in results) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


def _set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def cmd_sweep(args) -> int:
    base_doc = preset_document(args.scenario) if args.scenario in PRESETS else None
    if base_doc is None:
        base_doc = scenario_to_dict(load_scenario(args.scenario))
    values = [json.loads(v) for v in args.values.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    out = _out_dir(args.out_dir)
    jobs = []
    for value in values:
        doc = copy.deepcopy(base_doc)
        _set_path(doc, args.param, value)
        s = _apply_overrides(scenario_from_dict(doc), args)
        s = _ensure_calibrated(s, out)
        jobs.extend((value, seed, s) for seed in seeds)

    def work(job):
        value, seed, s = job
        tr = run_scenario(s, seed)
        summ = summarize(tr, [i for i in range(s.graph.n) if i not in {a.target for a in s.attacks}])
        lat = {f"latency_{i}": min((v for v in summ["detection_latency"][str(i)].values() if v is not None),
                                   default=None) for i in range(s.graph.n)}
        return {"value": json.dumps(value), "seed": seed, "diverged": tr.diverged,
                "consensus_tail_average": summ["consensus_tail_average"],
                "max_abs_state": summ["max_abs_state"], **lat}

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(work, jobs))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(r)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rescon", description="Resilient consensus simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", help="scenario JSON file or preset name")
        sp.add_argument("--out-dir", help="output directory (default $RESCON_OUT_DIR or ./rescon-out)")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--t-end", type=float)
        sp.add_argument("--thresholds", help="thresholds JSON written by 'calibrate'")

    run = sub.add_parser("run", help="run one scenario")
    common(run)
    run.add_argument("--seed", type=int)
    run.add_argument("--mitigate", choices=["on", "off"])
    run.add_argument("--no-svg", action="store_true", help="skip SVG chart rendering")
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate", help="detector and trust thresholds from attack-free runs")
    common(cal)
    cal.add_argument("--runs", type=int, default=20)
    cal.add_argument("--factor", type=float, default=3.0)
    cal.add_argument("--delta-factor", type=float, default=10.0)
    cal.add_argument("--out", help="thresholds file path (default OUT_DIR/thresholds.json)")
    cal.set_defaults(func=cmd_calibrate)

    rep = sub.add_parser("reproduce", help="run the acceptance suite")
    rep.add_argument("--suite", default="paper")
    rep.add_argument("--list", action="store_true", help="list bundled presets")
    rep.add_argument("--only", help="comma-separated check numbers")
    rep.add_argument("--out-dir")
    rep.set_defaults(func=cmd_reproduce)

    sw = sub.add_parser("sweep", help="vary one scenario field over values and seeds")
    common(sw)
    sw.add_argument("--param", required=True, help="dotted field path, e.g. trust.Lambda1")
    sw.add_argument("--values", required=True, help="comma-separated JSON values")
    sw.add_argument("--seeds", default="0")
    sw.add_argument("--mitigate", choices=["on", "off"])
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, RefusesAttackScenario) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
