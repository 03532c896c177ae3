"""
Loss bounds as a function of the guidance discount
==================================================

Both bounds trade a bias term, which shrinks as gamma approaches the
evaluation discount, against an uncertainty term that grows with it.
"""

import numpy as np

from metaplan.horizon import BoundParams, bound_curve, constant_c, prop1_gamma, u_minimizer

grid = np.linspace(0, 0.98, 50)
for m in (5, 100, 10_000, 1_000_000):
    single = BoundParams(m=m, t_tasks=1, s_count=10, a_count=2)
    meta = BoundParams(m=m, t_tasks=15, s_count=10, a_count=2, sigma=0.01)
    best = [min(bound_curve(p, grid, theorem=k), key=lambda r: r["total"]) for k, p in ((1, single), (2, meta))]
    print(f"m={m:>9,}  single task: gamma {best[0]['gamma']:.2f}  after 15 tasks: gamma {best[1]['gamma']:.2f}")

# With few samples per task both bounds are minimised by gamma = 0; more
# data moves the minimiser toward the evaluation discount.

# The constant C shrinks as tasks accumulate, which pushes the
# minimiser of the surrogate U toward longer horizons.
for t in (1, 5, 15, 100):
    c = constant_c(5, t, 0.01)
    print(f"t={t:3d}  C={c:.3f}  piecewise rule {prop1_gamma(c):.3f}  exact minimiser {u_minimizer(c):.3f}")
