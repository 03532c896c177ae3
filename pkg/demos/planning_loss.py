"""
Planning loss of a model learned from few samples
=================================================

Plan in an estimated model with a range of guidance discounts and score
each policy in the true MDP at the evaluation discount.
"""

import numpy as np

from metaplan.estimation import empirical_model
from metaplan.mdp import MdpInstance
from metaplan.meta_loop import planning_losses
from metaplan.tasks import RngStream, random_chain_mdp, random_rewards, sample_batch

gammas = np.linspace(0.0, 0.99, 12)
n_mdps = 30

for m in (1, 5, 50, 500):
    losses = np.zeros((n_mdps, gammas.size))
    for i in range(n_mdps):
        rng = RngStream(0, i)
        true_model = random_chain_mdp(10, 2, 5, rng.child(0))
        mdp = MdpInstance(true_model, random_rewards(10, 2, rng.child(1)), gamma_eval=0.99)
        estimate = empirical_model(sample_batch(true_model, m, rng.child(2, m)))
        losses[i] = planning_losses(mdp, estimate, gammas)
    mean = losses.mean(axis=0)
    print(f"m={m:4d}  mean loss at 0.99 = {mean[-1]:.3f}  best gamma = {gammas[np.argmin(mean)]:.2f} (loss {mean.min():.3f})")

# With few samples a short horizon is safer; as m grows the best
# guidance discount moves toward the evaluation discount.
