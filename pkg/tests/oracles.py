"""Independent reference computations used by the tests.

Nothing here calls the analytic gradient, Hessian-vector or aggregation code
under test: derivatives come from central differences of scalar functions and
weighted means come from a plain loop.
"""

from __future__ import annotations

import numpy as np


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
        e[i] = 0.0
    return g


def max_rel_error(a, b):
    """Largest coordinate discrepancy relative to the larger vector's scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def reference_loss(kind, loss_kind, theta, x, y, input_dim, hidden, output_dim):
    """Forward pass written independently of the package (loops over layers)."""
    theta = np.asarray(theta, dtype=np.float64)
    if kind == "linear":
        w = theta[: output_dim * input_dim].reshape(output_dim, input_dim)
        b = theta[output_dim * input_dim:]
        z = x @ w.T + b
    else:
        i = 0
        w1 = theta[i:i + hidden * input_dim].reshape(hidden, input_dim); i += hidden * input_dim
        b1 = theta[i:i + hidden]; i += hidden
        w2 = theta[i:i + output_dim * hidden].reshape(output_dim, hidden); i += output_dim * hidden
        b2 = theta[i:]
        z = np.tanh(x @ w1.T + b1) @ w2.T + b2
    if loss_kind == "squared-error":
        return 0.5 * np.mean(np.sum((z - y) ** 2, axis=1))
    total = 0.0
    for row, label in zip(z, y):
        m = row.max()
        total += m + np.log(np.sum(np.exp(row - m))) - row[label]
    return total / len(y)


def weighted_mean(thetas, weights):
    num = np.zeros_like(np.asarray(thetas[0], dtype=np.float64))
    for t, w in zip(thetas, weights):
        num = num + w * np.asarray(t, dtype=np.float64)
    return num / np.sum(weights)


def unrolled_meta_objective(loss_fn, grad_fn, theta, tasks, beta, inner_steps):
    """Mean post-adaptation query loss; differentiated numerically by the caller.

    ``grad_fn`` is only used to run the inner loop forward (its correctness is
    covered by the finite-difference gradient check).
    """
    total = 0.0
    for support, query in tasks:
        th = np.array(theta, dtype=np.float64)
        for _ in range(inner_steps):
            th = th - beta * grad_fn(th, support)
        total += loss_fn(th, query)
    return total / len(tasks)
