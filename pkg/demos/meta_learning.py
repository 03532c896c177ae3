"""
Learning a transition prior across tasks
========================================

Run the meta-learning variants on streams of related tasks and compare
their planning loss at gamma = 0.99 task by task, averaged over seeds.
"""

import numpy as np

from metaplan.meta_loop import VARIANTS, run_variants
from metaplan.tasks import MetaDistribution, RngStream, random_chain_mdp, random_rewards

n_seeds, n_tasks = 30, 15
loss = {v: np.zeros((n_seeds, n_tasks)) for v in VARIANTS}

for seed in range(n_seeds):
    rng = RngStream(0, seed)
    mean = random_chain_mdp(10, 2, 5, rng.child(0))
    dist = MetaDistribution.from_sigma(mean, 0.01)
    rewards = random_rewards(10, 2, rng.child(1))
    records = run_variants(VARIANTS, dist, rewards, n_tasks, m=5, schedules=["fixed:0.99"], rng=rng, seed=seed)
    for v in VARIANTS:
        loss[v][seed] = records[(v, "fixed:0.99")].chosen_loss

print("task" + "".join(f"{v:>19}" for v in VARIANTS))
for t in range(n_tasks):
    print(f"{t + 1:4d}" + "".join(f"{loss[v][:, t].mean():19.3f}" for v in VARIANTS))

# ada-POMRL also tracks its own estimate of the spread and the mixing weight
ada = records[("ada_pomrl", "fixed:0.99")]
print("last seed, ada-POMRL sigma-hat:", ada.sigma_hat_trace.round(4))
print("last seed, ada-POMRL alpha:    ", ada.alpha_trace.round(3))
