"""
Offline runs
============

With a fixed dataset, each round picks a direction from the current average
reward vector, fits a pessimistic reward for it and plays the matching policy.
The averaged policy is then scored against the best policy found by a direct
search.
"""

# %%
import numpy as np

from mopo import AggregationSpec, RunConfig, make_world, run_offline
from mopo.drivers import evaluate_gap
from mopo.learning import offline_dataset
from mopo.oracle import solve_consensus

w = make_world(3)
target = [AggregationSpec([0.5, 0.5], 0.5, 1.3)]
best = solve_consensus(w, target)
print(f"best achievable distance {best.value:.4f}")

# %%
# With exact rewards the only error left is from the averaging itself.
exact = run_offline(w, None, target, RunConfig(100), theta=w.theta_star)
print(f"true rewards:  D_tilde {exact.D_tilde:.4f}  gap {evaluate_gap(w, exact, best):+.4f}")

# %%
# Learned rewards add statistical error, which shrinks as data grows.
for M in (100, 1000, 10000):
    counts = offline_dataset(w, M, np.random.default_rng(0))
    tr = run_offline(w, counts, target, RunConfig(30, M=M))
    print(f"M={M:>6}:  gap {evaluate_gap(w, tr, best):+.4f}  last d {tr.directions[-1].round(3)}")
