"""Evaluate the built-in hyperelastic benchmark models along the six
canonical deformation paths and dump a plot-ready CSV.

Run:  python3 demos/02_benchmark_materials.py [out.csv]
"""
import csv
import sys

import numpy as np

from convexkan.cli import evaluation_paths
from convexkan.mechanics import BENCHMARKS, benchmark_model, compute_state

out = sys.argv[1] if len(sys.argv) > 1 else "benchmarks.csv"
models = {kind: benchmark_model(kind) for kind in sorted(BENCHMARKS)}

# Sanity: a worked value for the Neo-Hookean model under 50% uniaxial stretch.
F = np.diag([1.5, 1.0, 1.0])
print("NH W(diag(1.5,1,1)) =", models["NH"].energy(F), "(expect about 0.4966)")

with open(out, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["path", "gamma", "K1", "K2", "K3"] + [f"W_{k}" for k in models])
    for path in evaluation_paths():
        for gamma in path.grid():
            Fg = path.deformation(gamma)
            K = compute_state(Fg).K
            w.writerow(
                [path.kind, f"{gamma:.4f}"]
                + [f"{v:.6g}" for v in K]
                + [f"{m.energy(Fg):.6g}" for m in models.values()]
            )
print("wrote", out)

# Every model is stress-free in the reference configuration.
for kind, m in models.items():
    P = m.stress(np.eye(3))
    print(f"{kind}: |P(I)| = {np.abs(P).max():.2e}")
