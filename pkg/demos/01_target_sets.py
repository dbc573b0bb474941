"""
Target sets and projections
===========================

A target set collects every reward vector whose weighted power mean clears a
threshold.  This script builds a few, measures how far points sit from them and
looks at the projection directions the optimizers are steered by.
"""

# %%
# A spec is a weight vector, an exponent and a threshold.  ``p = 1`` is the
# plain weighted sum, ``p = 0`` the geometric mean, ``NEG_INF`` the minimum.
import numpy as np

from mopo import NEG_INF, AggregationSpec, aggregate, contains, distance, project

z = np.array([0.5, 2.0])
for p in (1, 0.5, 0, -2, NEG_INF):
    spec = AggregationSpec([0.5, 0.5], p, 1.0)
    print(f"p={p!s:>5}  mean={aggregate(spec, z):.4f}  inside={contains(spec, z)}")

# %%
# Lower exponents punish the weak coordinate harder, so the same point can be
# inside the linear set and outside the min-style one.  Projections move a point
# onto the boundary along the shortest path.
v = np.array([0.2, 0.4])
for p in (1, 0, NEG_INF):
    spec = AggregationSpec([0.5, 0.5], p, 1.0)
    print(f"p={p!s:>5}  projection={project(spec, v).round(4)}  distance={distance(spec, v):.4f}")

# %%
# Batches work the same way: pass an ``(n, m)`` array and get one row back per point.
pts = np.random.default_rng(0).uniform(-1, 2, (5, 2))
print(project(AggregationSpec([0.3, 0.7], -0.5, 1.2), pts).round(4))

# %%
# Several groups can demand their own sets at once.  The consensus direction
# points at the intersection; the malfare direction blends one direction per group.
from mopo import MultiGroupSpec, direction_consensus, direction_malfare, project_intersection

groups = (AggregationSpec([0.8, 0.2], 0.5, 1.0), AggregationSpec([0.2, 0.8], 0.0, 1.0))
v = np.array([0.3, 0.3])
print("intersection point", project_intersection(list(groups), v).round(4))
print("consensus direction", direction_consensus(list(groups), v).l1().d.round(4))
mg = MultiGroupSpec(groups, [0.5, 0.5], 2)
print("malfare direction  ", direction_malfare(mg, v).l1().d.round(4))
