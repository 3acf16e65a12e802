"""Synthetic task families and non-IID client partitions.

Three families are available:

``shifted-linear-regression``
    ``y = x @ slope.T + intercept + noise`` with ``x ~ N(0, I)``. Each task
    perturbs ``slope`` (centred at 1) and ``intercept`` (centred at 0) by
    ``heterogeneity * U(-1, 1)`` per entry.

``sine-regression``
    ``y = amplitude * sin(x + phase) + noise`` with ``x ~ U(-5, 5)``. The
    amplitude lives in [0.1, 5.0] and the phase in [0, pi]; a task draws each
    uniformly from a window around the range midpoint whose half-width is
    ``min(heterogeneity, 1)`` times the range half-width, so heterogeneity 1
    reproduces the usual sinusoid benchmark and smaller values shrink the
    task distribution toward a single sine (0 means every task is identical).

``gaussian-class-clusters``
    Fixed class means (drawn once from ``world_seed``) with isotropic feature
    noise ``noise_std``. Tasks differ only in their label proportions, drawn
    from ``Dirichlet(heterogeneity)``; small concentration means strong label
    skew, very large concentration means IID clients.

Data carries no time index: each client holds one static dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import _seeding
from .errors import ConfigError
from .model import Batch

FamilyKind = Literal["shifted-linear-regression", "sine-regression", "gaussian-class-clusters"]
FAMILY_KINDS = ("shifted-linear-regression", "sine-regression", "gaussian-class-clusters")

AMPLITUDE_RANGE = (0.1, 5.0)
PHASE_RANGE = (0.0, np.pi)
SINE_INPUT_RANGE = (-5.0, 5.0)
CLUSTER_SCALE = 2.0


@dataclass(frozen=True)
class TaskFamily:
    kind: FamilyKind = "sine-regression"
    input_dim: int = 1
    output_dim: int = 1
    heterogeneity: float = 1.0
    noise_std: float = 0.0
    world_seed: int = 0

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ConfigError(f"unknown task family {self.kind!r}")
        if not np.isfinite(self.heterogeneity) or self.heterogeneity < 0:
            raise ConfigError("heterogeneity must be finite and >= 0")
        if self.kind == "gaussian-class-clusters" and self.heterogeneity == 0:
            raise ConfigError("Dirichlet concentration (heterogeneity) must be > 0")
        if not self.noise_std >= 0:
            raise ConfigError("noise_std must be >= 0")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if self.kind == "sine-regression" and (self.input_dim, self.output_dim) != (1, 1):
            raise ConfigError("sine-regression is scalar: input_dim = output_dim = 1")
        if self.kind == "gaussian-class-clusters" and self.output_dim < 2:
            raise ConfigError("gaussian-class-clusters needs output_dim >= 2 classes")

    @property
    def is_classification(self) -> bool:
        return self.kind == "gaussian-class-clusters"


@dataclass(frozen=True)
class Task:
    id: str
    generator_params: dict
    support: Batch
    query: Batch


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    data: Batch
    quality_weight: float = 1.0
    generator_params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.quality_weight > 0:
            raise ConfigError("quality_weight must be > 0")

    @property
    def n_k(self) -> int:
        return len(self.data)


# -- generators --------------------------------------------------------------

def class_means(family: TaskFamily) -> np.ndarray:
    """The family's fixed ``(classes, input_dim)`` cluster centres."""
    r = _seeding.rng(family.world_seed, family.output_dim, family.input_dim)
    return CLUSTER_SCALE * r.standard_normal((family.output_dim, family.input_dim))


def _dirichlet(r: np.random.Generator, concentration: float, k: int) -> np.ndarray:
    # gamma draws underflow to 0 for tiny concentrations; fall back to one-hot
    g = r.standard_gamma(np.full(k, concentration))
    total = g.sum()
    if not total > 0 or not np.isfinite(total):
        p = np.zeros(k)
        p[r.integers(k)] = 1.0
        return p
    return g / total


def draw_generator_params(family: TaskFamily, r: np.random.Generator) -> dict:
    s = family.heterogeneity
    if family.kind == "shifted-linear-regression":
        slope = 1.0 + s * r.uniform(-1.0, 1.0, size=(family.output_dim, family.input_dim))
        intercept = s * r.uniform(-1.0, 1.0, size=family.output_dim)
        return {"slope": slope, "intercept": intercept}
    if family.kind == "sine-regression":
        w = min(s, 1.0)
        return {"amplitude": float(_window(r, AMPLITUDE_RANGE, w)),
                "phase": float(_window(r, PHASE_RANGE, w))}
    return {"label_proportions": _dirichlet(r, s, family.output_dim)}


def _window(r: np.random.Generator, bounds: tuple[float, float], width: float) -> float:
    mid = 0.5 * (bounds[0] + bounds[1])
    half = 0.5 * (bounds[1] - bounds[0]) * width
    return r.uniform(mid - half, mid + half)


def _allocate(proportions: np.ndarray, n: int) -> np.ndarray:
    """Integer counts summing to ``n`` (largest-remainder rounding)."""
    raw = proportions * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    if short:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def draw_examples(family: TaskFamily, params: dict, n: int, r: np.random.Generator) -> Batch:
    """``n`` examples from the generator described by ``params``."""
    if family.kind == "shifted-linear-regression":
        x = r.standard_normal((n, family.input_dim))
        y = x @ params["slope"].T + params["intercept"]
        y = y + family.noise_std * r.standard_normal(y.shape)
        return Batch(x, y)
    if family.kind == "sine-regression":
        x = r.uniform(*SINE_INPUT_RANGE, size=(n, 1))
        y = params["amplitude"] * np.sin(x + params["phase"])
        y = y + family.noise_std * r.standard_normal(y.shape)
        return Batch(x, y)
    counts = _allocate(params["label_proportions"], n)
    labels = r.permutation(np.repeat(np.arange(family.output_dim), counts))
    x = class_means(family)[labels] + family.noise_std * r.standard_normal((n, family.input_dim))
    return Batch(x, labels)


def _make_task(family: TaskFamily, task_id: str, r: np.random.Generator,
               n_support: int, n_query: int) -> Task:
    if n_support < 1 or n_query < 1:
        raise ConfigError("support and query sizes must be >= 1")
    params = draw_generator_params(family, r)
    both = draw_examples(family, params, n_support + n_query, r)
    return Task(task_id, params, both.take(slice(0, n_support)), both.take(slice(n_support, None)))


# -- public operations ---------------------------------------------------------

def sample_task(family: TaskFamily, seed: int, n_support: int = 10, n_query: int = 10) -> Task:
    """A training task; identical ``(family, seed)`` gives an identical task."""
    r = _seeding.rng(_seeding.TRAIN_TASK, seed)
    return _make_task(family, f"train-{seed}", r, n_support, n_query)


def holdout_new_task(family: TaskFamily, seed: int, n_support: int = 10,
                     n_query: int = 10) -> Task:
    """A held-out task from a seed stream disjoint from :func:`sample_task`."""
    r = _seeding.rng(_seeding.HOLDOUT_TASK, seed)
    return _make_task(family, f"holdout-{seed}", r, n_support, n_query)


def partition_clients(family: TaskFamily, K: int, per_client_n, seed: int,
                      quality_weights=None) -> list[ClientDataset]:
    """Draw ``K`` client datasets, each from its own task generator.

    ``per_client_n`` is either an int or an inclusive ``(low, high)`` range from
    which each client's example count is drawn uniformly.
    """
    if K < 1:
        raise ConfigError("client count K must be >= 1")
    if quality_weights is not None and len(quality_weights) != K:
        raise ConfigError("quality_weights must have one entry per client")
    sizes_rng = _seeding.rng(_seeding.CLIENT, seed)
    if isinstance(per_client_n, (tuple, list)):
        low, high = (int(v) for v in per_client_n)
        if not 1 <= low <= high:
            raise ConfigError("per-client size range must satisfy 1 <= low <= high")
        sizes = sizes_rng.integers(low, high + 1, size=K)
    else:
        if int(per_client_n) < 1:
            raise ConfigError("per-client size must be >= 1")
        sizes = np.full(K, int(per_client_n))
    clients = []
    for k in range(K):
        r = _seeding.rng(_seeding.CLIENT, seed, k + 1)
        params = draw_generator_params(family, r)
        data = draw_examples(family, params, int(sizes[k]), r)
        q = 1.0 if quality_weights is None else float(quality_weights[k])
        clients.append(ClientDataset(k, data, q, params))
    return clients


def client_task(client: ClientDataset, support_fraction: float = 0.5) -> Task:
    """View a client's data as a meta-learning task (leading rows = support)."""
    n = client.n_k
    if n < 2:
        raise ConfigError(f"client {client.client_id} needs >= 2 examples to form a task")
    cut = min(max(1, int(round(n * support_fraction))), n - 1)
    return Task(f"client-{client.client_id}", client.generator_params,
                client.data.take(slice(0, cut)), client.data.take(slice(cut, None)))


def pool(clients: list[ClientDataset]) -> ClientDataset:
    """All client data stacked into a single dataset (centralized training)."""
    return ClientDataset(0, Batch.concat([c.data for c in clients]))


# -- JSON-lines interchange ----------------------------------------------------

def write_jsonl(batch: Batch, path) -> None:
    """One example per line: ``{"input": [...], "target": [...] | int}``."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(batch.inputs, batch.targets):
            target = int(y) if batch.has_class_labels else [float(v) for v in y]
            fh.write(json.dumps({"input": [float(v) for v in x], "target": target}) + "\n")


def read_jsonl(path) -> Batch:
    xs, ys = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        xs.append(row["input"])
        ys.append(row["target"])
    if not xs:
        raise ConfigError(f"{path} holds no examples")
    if isinstance(ys[0], int):
        return Batch(np.array(xs, dtype=np.float64), np.array(ys, dtype=np.int64))
    return Batch(np.array(xs, dtype=np.float64), np.array(ys, dtype=np.float64))


def export_clients(clients: list[ClientDataset], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in clients:
        p = directory / f"client_{c.client_id:04d}.jsonl"
        write_jsonl(c.data, p)
        paths.append(p)
    return paths


def import_clients(directory) -> list[ClientDataset]:
    paths = sorted(Path(directory).glob("client_*.jsonl"))
    return [ClientDataset(int(p.stem.split("_")[1]), read_jsonl(p)) for p in paths]
