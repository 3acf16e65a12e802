import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metafed.config import MetaConfig
from metafed.errors import ConfigError, DivergenceError
from metafed.harness import personalization_gap
from metafed.meta import (adapt, meta_batch_seeds, meta_gradient, meta_step, meta_train,
                          task_meta_gradient)
from metafed.model import Batch, ModelSpec, grad, init_params, loss, param_count
from metafed.tasks import Task, TaskFamily, holdout_new_task, sample_task

from oracles import central_diff, max_rel_error, unrolled_meta_objective

SCALAR = ModelSpec("linear", 1, 0, 1)


def bias_task(support_target, query_target, name="t"):
    # zero inputs: the loss only sees the bias, 1/2 (b - y)^2
    return Task(name, {}, Batch([[0.0]], [[support_target]]), Batch([[0.0]], [[query_target]]))


def random_tasks(rng, spec, count):
    d, o = spec.input_dim, spec.output_dim
    return [Task(f"r{j}", {},
                 Batch(rng.standard_normal((5, d)), rng.standard_normal((5, o))),
                 Batch(rng.standard_normal((6, d)), rng.standard_normal((6, o))))
            for j in range(count)]


def test_adapt_one_step_on_quadratic():
    out = adapt(SCALAR, np.zeros(2), bias_task(2.0, 0.0), beta=0.25, steps=1)
    np.testing.assert_array_equal(out, [0.0, 0.5])


def test_adapt_stationary_at_support_minimum():
    theta = np.array([0.7, 2.0])
    np.testing.assert_array_equal(adapt(SCALAR, theta, bias_task(2.0, 0.0), 0.3, 5), theta)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.integers(1, 4), t=st.integers(1, 4))
def test_adapt_composes(seed, s, t):
    rng = np.random.default_rng(seed)
    spec = ModelSpec("linear", 2, 0, 1)
    task = random_tasks(rng, spec, 1)[0]
    theta = rng.standard_normal(3)
    two_legs = adapt(spec, adapt(spec, theta, task, 0.1, s), task, 0.1, t)
    assert np.array_equal(two_legs, adapt(spec, theta, task, 0.1, s + t))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.01, 0.99), steps=st.integers(1, 5))
def test_adapt_never_increases_support_loss_below_inverse_curvature(seed, frac, steps):
    rng = np.random.default_rng(seed)
    spec = ModelSpec("linear", 3, 0, 1)
    task = random_tasks(rng, spec, 1)[0]
    x = np.hstack([task.support.inputs, np.ones((len(task.support), 1))])
    lipschitz = np.linalg.eigvalsh(x.T @ x / len(x)).max()
    theta = rng.standard_normal(4)
    after = adapt(spec, theta, task, frac / lipschitz, steps)
    assert loss(spec, after, task.support) <= loss(spec, theta, task.support)


def test_adapt_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        adapt(SCALAR, np.zeros(2), bias_task(1, 1), 0.1, 0)
    with pytest.raises(ConfigError):
        adapt(SCALAR, np.zeros(2), bias_task(1, 1), 0.0, 1)


@pytest.mark.parametrize("order", ["first", "second", "joint"])
def test_symmetric_tasks_leave_theta_unchanged(order):
    tasks = [bias_task(1.0, 1.0, "a"), bias_task(-1.0, -1.0, "b")]
    cfg = MetaConfig(alpha=0.1, beta=0.5, order=order)
    np.testing.assert_array_equal(meta_step(SCALAR, np.zeros(2), tasks, cfg), np.zeros(2))


def test_hand_computed_meta_gradients():
    # adapted bias 0.5; query residual -2.5; inner Jacobian 1 - beta = 0.5
    task = bias_task(1.0, 3.0)
    first = task_meta_gradient(SCALAR, np.zeros(2), task, MetaConfig(beta=0.5, order="first"))
    second = task_meta_gradient(SCALAR, np.zeros(2), task, MetaConfig(beta=0.5, order="second"))
    np.testing.assert_array_equal(first, [0.0, -2.5])
    np.testing.assert_array_equal(second, [0.0, -1.25])


def test_joint_order_is_summed_task_gradient():
    rng = np.random.default_rng(3)
    spec = ModelSpec("linear", 2, 0, 1)
    tasks = random_tasks(rng, spec, 3)
    theta = rng.standard_normal(3)
    expected = sum(grad(spec, theta, Batch.concat([t.support, t.query])) for t in tasks)
    np.testing.assert_allclose(meta_gradient(spec, theta, tasks, MetaConfig(order="joint")),
                               expected, rtol=0, atol=1e-14)


def test_first_equals_second_when_curvature_term_vanishes():
    # support inputs are zero so its Hessian only touches the bias, and the query
    # residuals (+0.5, -0.5) at x = (1, -1) leave the bias gradient exactly zero
    task = Task("h0", {}, Batch([[0.0]], [[0.0]]), Batch([[1.0], [-1.0]], [[0.5], [-0.5]]))
    theta = np.array([1.0, 0.0])
    kw = dict(beta=0.3, inner_steps=2)
    first = task_meta_gradient(SCALAR, theta, task, MetaConfig(order="first", **kw))
    second = task_meta_gradient(SCALAR, theta, task, MetaConfig(order="second", **kw))
    assert np.array_equal(first, second)
    np.testing.assert_array_equal(first, [0.5, 0.0])


@pytest.mark.parametrize("kind", ["linear", "one-hidden-layer"])
@pytest.mark.parametrize("inner_steps", [1, 2, 3])
def test_second_order_matches_unrolled_finite_differences(kind, inner_steps):
    rng = np.random.default_rng(inner_steps)
    spec = ModelSpec(kind, 2, 4 if kind != "linear" else 0, 1)
    tasks = random_tasks(rng, spec, 2)
    theta = 0.5 * rng.standard_normal(param_count(spec))
    cfg = MetaConfig(beta=0.1, inner_steps=inner_steps, order="second")
    pairs = [(t.support, t.query) for t in tasks]
    fd = central_diff(lambda th: unrolled_meta_objective(
        lambda p, b: loss(spec, p, b), lambda p, b: grad(spec, p, b), th, pairs, 0.1,
        inner_steps), theta)
    assert max_rel_error(meta_gradient(spec, theta, tasks, cfg), fd) <= 1e-4


def test_first_order_gap_shrinks_with_beta():
    rng = np.random.default_rng(0)
    spec = ModelSpec("linear", 3, 0, 1)
    tasks = random_tasks(rng, spec, 4)
    theta = rng.standard_normal(4)
    gaps = []
    for beta in (1e-2, 1e-3, 1e-4):
        f = meta_gradient(spec, theta, tasks, MetaConfig(beta=beta, order="first"))
        s = meta_gradient(spec, theta, tasks, MetaConfig(beta=beta, order="second"))
        gaps.append(np.linalg.norm(f - s))
    assert gaps[0] / gaps[1] == pytest.approx(10, rel=0.05)
    assert gaps[1] / gaps[2] == pytest.approx(10, rel=0.05)


def test_meta_train_single_iteration_is_one_meta_step():
    fam = TaskFamily("shifted-linear-regression", 2, 1, 1.0, 0.1)
    spec = ModelSpec("linear", 2, 0, 1)
    cfg = MetaConfig(alpha=0.05, beta=0.05, meta_batch=4)
    theta0 = init_params(spec, 0)
    tasks = [sample_task(fam, s) for s in meta_batch_seeds(9, 0, 4)]
    np.testing.assert_array_equal(meta_train(spec, theta0, fam, cfg, 1, seed=9),
                                  meta_step(spec, theta0, tasks, cfg))
    with pytest.raises(ConfigError):
        meta_train(spec, theta0, fam, cfg, 0, seed=9)


def test_meta_batch_seeds_are_distinct():
    seeds = [s for it in range(20) for s in meta_batch_seeds(1, it, 8)]
    assert len(set(seeds)) == len(seeds)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_task():
    task = Task("boom", {}, Batch([[1e200]], [[0.0]]), Batch([[1.0]], [[0.0]]))
    with pytest.raises(DivergenceError) as info:
        adapt(SCALAR, np.ones(2), task, 1.0, 3)
    assert info.value.task_id == "boom"


def test_zero_heterogeneity_leaves_nothing_to_adapt():
    fam = TaskFamily("shifted-linear-regression", 2, 1, 0.0, 0.0)
    spec = ModelSpec("linear", 2, 0, 1)
    theta = meta_train(spec, init_params(spec, 0), fam, MetaConfig(alpha=0.1, beta=0.05), 300, 0)
    tasks = [holdout_new_task(fam, s) for s in range(10)]
    assert personalization_gap(spec, theta, tasks, 0.05, 5) == pytest.approx(0.0, abs=1e-12)
    assert personalization_gap(spec, init_params(spec, 0), tasks, 0.05, 5) > 0.1


@pytest.mark.slow
def test_sine_meta_training_beats_random_init():
    fam = TaskFamily("sine-regression", 1, 1, 1.0, 0.0)
    spec = ModelSpec("one-hidden-layer", 1, 40, 1)
    cfg = MetaConfig(alpha=0.01, beta=0.01, meta_batch=5, order="first")
    wins = 0
    for seed in range(20):
        theta0 = init_params(spec, seed)
        trained = meta_train(spec, theta0, fam, cfg, 2000, seed=seed)
        tasks = [holdout_new_task(fam, 1000 * seed + j, 10, 50) for j in range(10)]

        def after(theta):
            return np.mean([loss(spec, adapt(spec, theta, t, 0.01, 5), t.query) for t in tasks])

        wins += after(trained) < after(theta0)
    assert wins >= 18
