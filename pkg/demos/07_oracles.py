"""
Reference solvers
=================

The oracles search directly over policies for small worlds.  They supply the
yardsticks the learners are measured against.
"""

# %%
from mopo import AggregationSpec, MultiGroupSpec, make_world
from mopo.oracle import grid_search, maxmin_dual, solve_consensus, solve_malfare, solve_maxmin
from mopo.world import expected_reward_vector

w = make_world(2)
target = [AggregationSpec([0.5, 0.5], 0.0, 1.4)]
res = solve_consensus(w, target, restarts=8)
g_val, _ = grid_search(w, target)
print(f"consensus: multistart {res.value:.5f}  grid {g_val:.5f}  spread {res.certificate['spread']:.1e}")

# %%
# With several groups the malfare aggregates their distances with a q-norm.
mg = MultiGroupSpec((AggregationSpec([0.2, 0.8], 0.5, 1.3), AggregationSpec([0.8, 0.2], 0.5, 1.3)),
                    [0.5, 0.5], 2)
print(f"malfare q=2: {solve_malfare(w, mg, restarts=8).value:.5f}")

# %%
# Max-min has a concave dual over weightings, which brackets the primal value.
mm = solve_maxmin(w)
dual, lam = maxmin_dual(w)
print(f"max-min primal {mm.value:.5f}  dual {dual:.5f}  at weights {lam.round(3)}")
print("reward vector at the max-min policy", expected_reward_vector(w, mm.pi_star).round(4))
