"""Print the headline numbers from an output directory written by the CLI."""

import sys
from pathlib import Path

import numpy as np

from ensconv.output import read_csv


def main(outdir):
    out = Path(outdir)
    for path in sorted(out.rglob("benchmark.csv")):
        for r in read_csv(path):
            print(f"Ra={float(r['Ra']):g}: u1max={float(r['u1_max_x_half']):.2f} "
                  f"u2max={float(r['u2_max_y_half']):.2f} Nu={float(r['nu_avg_hot']):.3f} halvings={r['halvings']}")
    for path in sorted(out.rglob("convergence_*.csv")):
        print(path.name)
        for r in read_csv(path):
            print("  " + " ".join(f"{k}={float(r[k]):.3g}" for k in ("u_l2", "u_l2_rate", "T_l2", "T_l2_rate",
                                                                      "p_l2", "p_l2_rate")))
    for path in sorted(out.rglob("lyapunov_Ra*.csv")):
        rows = read_csv(path)
        g = np.array([float(r["gamma_u"]) for r in rows])
        t = np.array([float(r["t"]) for r in rows])
        flips = t[1:][np.sign(g[1:]) != np.sign(g[:-1])]
        print(f"{path.stem}: velocity growth-rate sign changes at {np.round(flips, 3).tolist()}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "out")
