"""Meta-learning an initialization that adapts in a few steps.

Sinusoid tasks differ in amplitude and phase. A network trained to fit
the average task does poorly on any single one. Meta-training with MAML
shapes the initialization so that five gradient steps on ten examples of a
new sinusoid help more and more: the pre-adaptation loss levels off while
the post-adaptation loss keeps falling.

    python3 demos/meta_adaptation.py
"""

from __future__ import annotations

import numpy as np

from metafed.config import MetaConfig
from metafed.meta import adapt, meta_train
from metafed.model import ModelSpec, init_params, loss
from metafed.tasks import TaskFamily, holdout_new_task

family = TaskFamily("sine-regression", heterogeneity=1.0)
spec = ModelSpec("one-hidden-layer", 1, 40, 1)
theta0 = init_params(spec, seed=0)
BETA = 0.05

# Held-out tasks: 10 support examples to adapt on, 50 query examples to score.
tasks = [holdout_new_task(family, s, n_support=10, n_query=50) for s in range(25)]


def query_loss(theta, steps):
    losses = [loss(spec, adapt(spec, theta, t, BETA, steps) if steps else theta, t.query)
              for t in tasks]
    return float(np.mean(losses))


cfg = MetaConfig(alpha=0.01, beta=BETA, inner_steps=1, meta_batch=10, order="first")
theta = theta0
print(f"{'iterations':>10} {'before':>8} {'after 5 steps':>14}")
print(f"{0:10d} {query_loss(theta0, 0):8.3f} {query_loss(theta0, 5):14.3f}")
for chunk in range(4):
    theta = meta_train(spec, theta, family, cfg, iterations=1500, seed=chunk)
    print(f"{1500 * (chunk + 1):10d} {query_loss(theta, 0):8.3f} {query_loss(theta, 5):14.3f}")
