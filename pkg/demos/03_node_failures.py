"""Sensors die; the network carries on.

Every node fails independently with a small probability in each outer
iteration.  Failed nodes stop talking, and the bridges they were attached
to fall back to the unsimplified averaging rule.  A network with more
bridge nodes has more redundant paths, so it tolerates more failures
before consensus becomes impossible.  Rates are per outer iteration, so over
100 iterations a rate of 0.01 already removes about 63% of the nodes.

The table below gives, for each bridge fraction and failure rate, the
share of trials that finished and the mean NMSE over surviving nodes.
Pass ``--trials`` to trade runtime for smoother numbers.
"""

import argparse

from cbdsbl.bench import SweepGrid, run_sweep

ap = argparse.ArgumentParser()
ap.add_argument("--trials", type=int, default=10)
args = ap.parse_args()

fractions = [0.1, 0.3, 0.5]
rates = [0.0, 0.002, 0.005, 0.01]
grid = SweepGrid({"bridge_fraction": fractions, "failure_rate": rates},
                 base=dict(n=50, m=10, k=5, L=10, snr_db=30.0, k_max=100), trials=args.trials)
print(f"running {grid.size} trials ...")
res = run_sweep(grid)

print("\nfinished trials / mean NMSE over survivors (dB)")
print("bridge fraction " + "".join(f"{f'rate {r:g}':>18s}" for r in rates))
for f in fractions:
    cells = [row for row in res.rows if row["bridge_fraction"] == f]
    cells.sort(key=lambda r: r["failure_rate"])
    line = "".join(f"{row['trials'] - row['failed_trials']:>7d}/{row['trials']:<3d}{row['mean_nmse_db']:8.2f}"
                   for row in cells)
    print(f"{f:15g} {line}")
print("\nA failed trial means at some round no surviving node was attached to a surviving bridge.")
