"""Accuracy and task-level scoring shared by the round engine and the harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EvaluationError
from .model import ModelSpec, loss, predict
from .meta import adapt
from .tasks import Task


def accuracy(predictions, targets, threshold: Optional[float] = None) -> float:
    """Fraction of correct predictions.

    Integer ``targets`` are class labels: ``predictions`` may be logits
    (argmax is taken) or predicted labels. Float ``targets`` are regression
    values and a prediction is correct when its largest absolute error is at
    most ``threshold``.
    """
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if predictions.size == 0 or targets.size == 0:
        raise EvaluationError("accuracy of an empty prediction set")
    if targets.dtype.kind in "iu":
        labels = targets.reshape(-1)
        guessed = predictions.argmax(axis=1) if predictions.ndim == 2 else predictions.reshape(-1)
        if guessed.shape != labels.shape:
            raise EvaluationError("prediction and label counts differ")
        return float(np.mean(guessed == labels))
    if threshold is None:
        raise EvaluationError("regression accuracy needs an error threshold")
    p = predictions.reshape(predictions.shape[0], -1).astype(np.float64)
    t = targets.reshape(targets.shape[0], -1).astype(np.float64)
    if p.shape != t.shape:
        raise EvaluationError(f"prediction shape {p.shape} != target shape {t.shape}")
    return float(np.mean(np.max(np.abs(p - t), axis=1) <= threshold))


def rounds_to_target(records: Sequence, target: float) -> Optional[int]:
    """Index of the first round whose accuracy reaches ``target``; None if never."""
    if not records:
        raise EvaluationError("no round records")
    for rec in records:
        if rec.global_accuracy >= target:
            return rec.round_index
    return None


def regression_threshold(task: Task, tolerance: float) -> float:
    return tolerance * float(np.std(task.query.targets))


@dataclass(frozen=True)
class TaskScore:
    loss: float
    accuracy: float


def score_tasks(spec: ModelSpec, theta: np.ndarray, tasks: Sequence[Task],
                tolerance: float = 0.1, beta: Optional[float] = None,
                steps: int = 0) -> TaskScore:
    """Mean query loss and accuracy over ``tasks``.

    When ``steps > 0`` the model is first adapted on each task's support set
    with rate ``beta``.
    """
    losses, accs = [], []
    for task in tasks:
        theta_t = adapt(spec, theta, task, beta, steps) if steps > 0 else theta
        losses.append(loss(spec, theta_t, task.query))
        preds = predict(spec, theta_t, task.query.inputs)
        thr = None if spec.is_classifier else regression_threshold(task, tolerance)
        accs.append(accuracy(preds, task.query.targets, thr))
    return TaskScore(float(np.mean(losses)), float(np.mean(accs)))
