"""
Learning rewards and weights from comparisons
=============================================

Preference data are pairwise comparisons labelled under a Bradley-Terry model.
Reward parameters are fit by maximum likelihood, optionally shifted toward
pessimism or optimism.  When an annotator reports which objective drove their
choice, the mix of objectives they care about can be estimated too.
"""

# %%
import numpy as np

from mopo import make_world
from mopo.learning import (annotate, counts_from_data, fit_alpha, fit_theta, offline_dataset,
                           pair_gaps)

w = make_world(1, B=4.0)
rng = np.random.default_rng(0)
counts = offline_dataset(w, 2000, rng)
print("comparisons per objective", counts.reshape(w.features.shape[0], -1).sum(axis=1))

# %%
# The plain fit lands near the true parameters.  Pessimistic and optimistic
# fits trade likelihood for a lower or higher value of the chosen weighting.
mle = fit_theta(w, counts)
print("theta error (MLE)", np.abs(mle.theta - w.theta_star).max().round(4))
d, eta = np.array([0.5, 0.5]), 1 / np.sqrt(2000)
for mode in ("pessimistic", "optimistic"):
    fit = fit_theta(w, counts, d, mode, eta)
    print(f"{mode:>12}: residual {fit.residual:.1e}, shift {np.abs(fit.theta - mle.theta).max():.4f}")

# %%
# An annotator whose weights are (0.8, 0.2) labels pairs drawn from the
# reference policy.  With rewards known, their weights come back out.
alpha = np.array([0.8, 0.2])
data = [dt for _ in range(1500) for dt in annotate(w, w.pi_ref, [alpha], rng)]
_, ic = counts_from_data(w, data, n_groups=1)
est = fit_alpha(ic[0], pair_gaps(w, w.theta_star))
print("alpha_hat", est.alpha_hat.round(3), " iterations", est.n_iter)
