"""MAML-style meta-training and few-step adaptation.

The inner loop runs ``inner_steps`` full-batch gradient steps with rate
``beta`` on each task's support set; the outer update moves the shared
initialization by ``alpha`` times the mean query-set gradient taken after
adaptation. ``order="second"`` back-propagates through the inner loop with
Hessian-vector products, ``order="first"`` drops that Jacobian, and
``order="joint"`` skips the inner loop entirely and descends the summed task
losses at the shared parameters.
"""

from __future__ import annotations

import numpy as np

from . import _seeding
from .config import MetaConfig
from .errors import ConfigError, DivergenceError
from .model import Batch, ModelSpec, grad, hvp, loss_and_grad
from .tasks import Task, TaskFamily, sample_task


def _gd_path(spec: ModelSpec, theta: np.ndarray, batch: Batch, rate: float,
             steps: int) -> list[np.ndarray]:
    path = [np.asarray(theta, dtype=np.float64)]
    for step in range(steps):
        value, g = loss_and_grad(spec, path[-1], batch)
        if not np.isfinite(value):
            raise DivergenceError("non-finite loss during adaptation", step=step)
        nxt = path[-1] - rate * g
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError("non-finite parameters during adaptation", step=step)
        path.append(nxt)
    return path


def adapt(spec: ModelSpec, theta_init: np.ndarray, task: Task, beta: float,
          steps: int) -> np.ndarray:
    """``steps`` gradient steps of size ``beta`` on ``task.support``."""
    if steps < 1:
        raise ConfigError("adapt needs steps >= 1")
    if not beta > 0:
        raise ConfigError("beta must be > 0")
    try:
        return _gd_path(spec, theta_init, task.support, beta, steps)[-1]
    except DivergenceError as exc:
        raise exc.located(task_id=task.id)


def task_meta_gradient(spec: ModelSpec, theta: np.ndarray, task: Task,
                       cfg: MetaConfig) -> np.ndarray:
    if cfg.order == "joint":
        return grad(spec, theta, Batch.concat([task.support, task.query]))
    try:
        path = _gd_path(spec, theta, task.support, cfg.beta, cfg.inner_steps)
    except DivergenceError as exc:
        raise exc.located(task_id=task.id)
    g = grad(spec, path[-1], task.query)
    if cfg.order == "second":
        # d theta_{j+1} / d theta_j = I - beta * H(theta_j), applied right to left
        for theta_j in reversed(path[:-1]):
            g = g - cfg.beta * hvp(spec, theta_j, task.support, g)
    return g


def meta_gradient(spec: ModelSpec, theta: np.ndarray, tasks: list[Task],
                  cfg: MetaConfig) -> np.ndarray:
    """Mean per-task meta-gradient (summed over tasks for ``order="joint"``)."""
    if not tasks:
        raise ConfigError("meta step needs at least one task")
    total = np.zeros_like(np.asarray(theta, dtype=np.float64))
    for task in tasks:
        total += task_meta_gradient(spec, theta, task, cfg)
    return total if cfg.order == "joint" else total / len(tasks)


def meta_step(spec: ModelSpec, theta: np.ndarray, tasks: list[Task],
              cfg: MetaConfig) -> np.ndarray:
    out = np.asarray(theta, dtype=np.float64) - cfg.alpha * meta_gradient(spec, theta, tasks, cfg)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite parameters after meta step")
    return out


def meta_batch_seeds(seed: int, iteration: int, meta_batch: int) -> list[int]:
    return [_seeding.derive_seed(_seeding.META_BATCH, seed, iteration, j)
            for j in range(meta_batch)]


def meta_train(spec: ModelSpec, theta0: np.ndarray, family: TaskFamily, cfg: MetaConfig,
               iterations: int, seed: int, n_support: int = 10,
               n_query: int = 10) -> np.ndarray:
    """Run ``iterations`` meta steps on freshly sampled task batches."""
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    theta = np.asarray(theta0, dtype=np.float64)
    for it in range(iterations):
        tasks = [sample_task(family, s, n_support, n_query)
                 for s in meta_batch_seeds(seed, it, cfg.meta_batch)]
        try:
            theta = meta_step(spec, theta, tasks, cfg)
        except DivergenceError as exc:
            raise exc.located(iteration=it)
    return theta
