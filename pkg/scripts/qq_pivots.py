#!/usr/bin/env python3
"""Normal QQ pairs for the estimator pivots and leaf-count residuals.

Writes one CSV per interval (columns: theoretical, pivot, residual) and,
if matplotlib is available, a PNG grid.
"""

import argparse
from pathlib import Path

import numpy as np

from tvpa.experiments import emit_qq, run_replications, scenario_configs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=int, default=15000)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/qq")
    args = ap.parse_args(argv)

    cfg = scenario_configs("S1", n_reps=args.reps, seed=args.seed, T=args.T)[0]
    s = run_replications(cfg, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = []
    for j, col in enumerate(s.columns):
        piv = emit_qq(s.samples["pivot"][:, j])
        res = emit_qq(s.samples["resid"][:, j])
        np.savetxt(
            out / f"qq_interval{j + 1}.csv",
            np.column_stack([piv[:, 0], piv[:, 1], res[:, 1]]),
            delimiter=",",
            header="theoretical,pivot,residual",
            comments="",
        )
        pairs.append((col, piv, res))

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, axes = plt.subplots(2, len(pairs), figsize=(3 * len(pairs), 6), sharex=True, sharey=True)
    for j, (col, piv, res) in enumerate(pairs):
        for ax, qq, label in ((axes[0, j], piv, "pivot"), (axes[1, j], res, "residual")):
            ax.plot(qq[:, 0], qq[:, 1], ".", ms=2)
            ax.plot([-4, 4], [-4, 4], "k-", lw=0.5)
            ax.set_title(f"{label} {col}", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "qq.png", dpi=120)


if __name__ == "__main__":
    main()
