"""Folded-Gaussian KL: exact decomposition and two-term truncation against quadrature.

Prints, for a grid of mean-to-spread ratios, the oracle value and the errors of
both closed forms.  The truncated form is only usable near zero mean.

    python3 scripts/folded_kl_envelope.py
"""
import argparse

import numpy as np

from rescon.stats import (
    FoldedGaussianParams,
    folded_density,
    folded_gaussian_kl,
    folded_gaussian_kl_truncated,
    folded_support,
    kl_numeric_oracle,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratios", default="0,0.1,0.2,0.3,0.5,1,2,4")
    ap.add_argument("--s1", type=float, default=1.0)
    ap.add_argument("--s2", type=float, default=2.0)
    args = ap.parse_args()
    print(f"{'mu/sigma':>8} {'oracle':>12} {'exact err':>12} {'truncated err':>14}")
    for r in (float(v) for v in args.ratios.split(",")):
        p = FoldedGaussianParams(r * np.sqrt(args.s1), args.s1)
        q = FoldedGaussianParams(0.5 * r * np.sqrt(args.s2), args.s2)
        ref = kl_numeric_oracle(folded_density(p), folded_density(q), folded_support(p, q))
        exact = folded_gaussian_kl(p, q) - ref
        trunc = folded_gaussian_kl_truncated(p, q) - ref
        print(f"{r:8.2f} {ref:12.6g} {exact:12.3g} {trunc:14.3g}")


if __name__ == "__main__":
    main()
