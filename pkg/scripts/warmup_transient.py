"""How long the attack-free consensus transient dominates the detector statistics.

For each candidate warmup time, prints the per-agent maximum of the per-step
divergences (both detectors) after that time, over several seeds, next to the
steady median.  Calibrated trust scales must not absorb this transient.

    python3 scripts/warmup_transient.py
"""
import argparse

import numpy as np

from rescon.scenario import load_preset
from rescon.sim import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--starts", default="10,12,14,15,16,18")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()
    s = load_preset("fig2")
    traces = [run_scenario(s, seed) for seed in range(args.seeds)]
    kl = np.concatenate([np.maximum(tr.kl_imp, tr.kl_nonimp)[None] for tr in traces])
    t = traces[0].times
    steady = np.median(kl[:, t > 30.0], axis=(0, 1))
    print("steady median per agent:", np.array2string(steady, precision=3))
    for t0 in (float(v) for v in args.starts.split(",")):
        worst = kl[:, t > t0].max(axis=(0, 1))
        print(f"t > {t0:5.1f}: max per agent {np.array2string(worst, precision=3)}")


if __name__ == "__main__":
    main()
