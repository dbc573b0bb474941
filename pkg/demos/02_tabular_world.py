"""
A tabular world
===============

Worlds are small: a handful of prompts, a handful of responses and one linear
reward per objective.  Everything downstream (policies, expected rewards,
baselines) is computed exactly on these tables.
"""

# %%
import numpy as np

from mopo import make_world
from mopo.world import (expected_reward_vector, kl, mod_combine, optimal_policy_linear,
                        per_objective_policies, rewards)

w = make_world(0, n_prompts=2, n_responses=4, m=2)
print("feature tensor", w.features.shape, " beta", w.beta, " B", w.B)
print("reward tables (objective, prompt, response):")
print(rewards(w).round(3))

# %%
# The KL-regularized optimum for a fixed weighting tilts the reference policy
# by the weighted reward.  Expected reward subtracts the KL cost.
for d in ([1, 0], [0.5, 0.5], [0, 1]):
    pi = optimal_policy_linear(w, d)
    print(f"d={d}  S(pi)={expected_reward_vector(w, pi).round(4)}  KL={kl(w, pi):.4f}")

# %%
# Mixing per-objective optima at the logit level gives the same policy as
# optimizing the mixed reward directly, because rewards enter linearly.
pols = per_objective_policies(w)
mixed = mod_combine(pols, [0.3, 0.7])
print("max diff vs direct optimum", np.abs(mixed - optimal_policy_linear(w, [0.3, 0.7])).max())

# %%
# Worlds are hashable and serialize to JSON, so runs can name the world they used.
print("hash", w.hash()[:16])
