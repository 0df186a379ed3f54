"""Growth of the state norm under the resonant root attack.

Runs the root-attack preset with an effectively unbounded cap and reports the
peak state norm and the first crossing of several candidate caps, next to the
bounded peaks of the non-root and non-IMP presets.

    python3 scripts/divergence_growth.py
"""
import argparse
from dataclasses import replace

import numpy as np

from rescon.scenario import load_preset
from rescon.sim import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--caps", default="50,100,200,1e6")
    args = ap.parse_args()
    tr = run_scenario(replace(load_preset("fig3"), divergence_cap=1e12))
    peak = np.abs(tr.x).max(axis=(1, 2))
    for t in (20, 30, 40, 50, 60):
        print(f"fig3 t={t:2d}: max |x| = {peak[tr.times <= t].max():8.2f}")
    for cap in (float(v) for v in args.caps.split(",")):
        idx = np.flatnonzero(peak > cap)
        print(f"cap {cap:g}: " + (f"crossed at t = {tr.times[idx[0]]:.2f}" if idx.size else "never crossed"))
    for name in ("fig4", "fig7"):
        other = run_scenario(load_preset(name))
        print(f"{name}: peak |x| = {np.abs(other.x).max():.2f}")


if __name__ == "__main__":
    main()
