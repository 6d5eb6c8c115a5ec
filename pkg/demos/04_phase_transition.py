"""How few measurements per sensor are enough?

With L sensors sharing one support, each sensor needs fewer measurements
to reach 1% reconstruction error (-20 dB) than it would on its own.  The
sweep below scans the per-sensor measurement rate m/n for a single node
and for networks of 2, 5 and 10 nodes, and reports the first rate at which
the trial-averaged NMSE crosses -20 dB.

An SVG heatmap with the pass boundary is written next to this script.
"""

import argparse
from pathlib import Path

from cbdsbl.bench import SweepGrid, run_sweep
from cbdsbl.plotting import heatmap_plot

ap = argparse.ArgumentParser()
ap.add_argument("--trials", type=int, default=8)
ap.add_argument("--out", default=str(Path(__file__).with_name("phase_transition.svg")))
args = ap.parse_args()

grid = SweepGrid({"m_over_n": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "L": [1, 2, 5, 10]},
                 base=dict(n=50, k_over_n=0.1, snr_db=30.0, k_max=150), trials=args.trials)
print(f"running {grid.size} trials ...")
res = run_sweep(grid)
bound = res.boundary("m_over_n", "L")

print("\nNMSE (dB, averaged in linear scale) by m/n:")
rates = sorted({r["m_over_n"] for r in res.rows})
print("   L " + "".join(f"{x:>8g}" for x in rates))
for L in sorted(bound):
    row = sorted((r for r in res.rows if r["L"] == L), key=lambda r: r["m_over_n"])
    print(f"{L:4d} " + "".join(f"{r['avg_nmse_db']:8.1f}" for r in row))

print("\nfirst m/n reaching -20 dB:")
for L, x in sorted(bound.items()):
    print(f"  L = {L:2d}: {x if x is not None else 'not reached on this grid'}")

Path(args.out).write_text(heatmap_plot(res.rows, "m_over_n", "L", boundary=bound))
print(f"\nheatmap written to {args.out}")
