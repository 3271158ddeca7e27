"""Mean SER against corruption fraction for the target-only and transfer fits.

A reduced version of the benchmark grid; ``rtlasso bench`` runs the full one.

    python3 demos/breakdown_curve.py [reps]
"""
import sys

from rtlasso.simulation import SimDesign, sweep

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 5
grid = [0.1, 0.3, 0.5, 0.7, 0.9]
methods = ["lasso", "rlasso", "rtl"]

designs = [SimDesign(corruption_fraction=r) for r in grid]
table = sweep(designs, methods, reps, seed=0)

print("   r  " + "".join(f"{m:>10s}" for m in methods))
for i, r in enumerate(grid):
    print(f"{r:4.1f}  " + "".join(f"{table.mean_ser(i, m):10.2f}" for m in methods))
