"""Federated round engine.

Each round the server broadcasts the global parameters to a seeded sample of
clients, every participant runs local training with the current global step
size, the returned parameters are averaged with normalized weights, the
controller picks the next step size from the server-side validation loss, and
a :class:`RoundRecord` is emitted.

Communication is simulated by byte accounting only: one float64 parameter
vector per participant in each direction per round.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import _seeding
from .config import ExperimentConfig, FedConfig, PrivacyConfig, config_hash
from .controller import LrControllerState, on_round
from .errors import ConfigError, DivergenceError, ProtocolError, ShapeError
from .evaluation import TaskScore, score_tasks
from .meta import meta_step
from .model import ModelSpec, init_params, loss_and_grad
from .privacy import NoiseReport, clip_update, noise_multiplier_report, privatize_aggregate
from .tasks import ClientDataset, client_task, holdout_new_task, partition_clients, pool

BYTES_PER_PARAM = 8
WORKERS_ENV = "METAFED_MAX_WORKERS"

CSV_COLUMNS = ("round", "loss", "accuracy", "eta", "bytes_up", "bytes_down", "wall_ms",
               "delta_loss", "examples")


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    global_loss: float
    global_accuracy: float
    eta: float
    bytes_up: int
    bytes_down: int
    wall_ms: float
    delta_loss: Optional[float] = None
    examples: int = 0
    participants: tuple = ()

    def csv_row(self) -> list[str]:
        return [str(self.round_index), repr(self.global_loss), repr(self.global_accuracy),
                repr(self.eta), str(self.bytes_up), str(self.bytes_down), repr(self.wall_ms),
                "" if self.delta_loss is None else repr(self.delta_loss), str(self.examples)]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["participants"] = list(self.participants)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        d = dict(d)
        d["participants"] = tuple(d.get("participants", ()))
        return cls(**d)


# -- local training ------------------------------------------------------------

def local_training(spec: ModelSpec, client: ClientDataset, theta_in: np.ndarray, eta: float,
                   epochs: int = 1, batch_size="full", seed: int = 0) -> np.ndarray:
    """``epochs`` passes of mini-batch gradient descent on the client's data.

    With ``batch_size="full"`` each epoch is a single full-batch step and no
    randomness is consumed. ``theta_in`` is never modified.
    """
    if not eta > 0:
        raise ConfigError("learning rate must be > 0")
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    theta = np.array(theta_in, dtype=np.float64, copy=True)
    n = client.n_k
    full = batch_size == "full" or batch_size >= n
    r = None if full else _seeding.rng(seed)
    step = 0
    for _ in range(epochs):
        if full:
            batches = [client.data]
        else:
            order = r.permutation(n)
            batches = [client.data.take(order[i:i + batch_size]) for i in range(0, n, batch_size)]
        for batch in batches:
            value, g = loss_and_grad(spec, theta, batch)
            if not math.isfinite(value):
                raise DivergenceError("non-finite local loss", step=step,
                                      client_id=client.client_id)
            theta = theta - eta * g
            step += 1
    if not np.all(np.isfinite(theta)):
        raise DivergenceError("non-finite local parameters", step=step,
                              client_id=client.client_id)
    return theta


def meta_local_training(spec: ModelSpec, client: ClientDataset, theta_in: np.ndarray,
                        eta: float, meta_cfg, epochs: int = 1) -> np.ndarray:
    """Local meta-update: the client's data is split into support/query halves
    and ``epochs`` MAML steps are taken with ``eta`` as the outer rate."""
    cfg = dataclasses.replace(meta_cfg, alpha=eta)
    task = client_task(client)
    theta = np.asarray(theta_in, dtype=np.float64)
    for _ in range(epochs):
        try:
            theta = meta_step(spec, theta, [task], cfg)
        except DivergenceError as exc:
            raise exc.located(client_id=client.client_id)
    return theta


# -- aggregation -----------------------------------------------------------------

def normalized_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    return w / math.fsum(w)


def aggregate(updates: Sequence[tuple[np.ndarray, float]],
              client_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Weighted mean ``sum(w_i * theta_i) / sum(w_i)``.

    Updates are put in canonical order (by ``client_ids`` when given) and
    reduced as offsets from the first vector with Neumaier-compensated
    summation, so identical inputs come back bit-exactly and the result does
    not depend on worker scheduling.
    """
    if not updates:
        raise ProtocolError("aggregate needs at least one update")
    items = list(updates)
    if client_ids is not None:
        if len(client_ids) != len(items):
            raise ProtocolError("one client id per update required")
        items = [u for _, u in sorted(zip(client_ids, items), key=lambda p: p[0])]
    thetas = [np.asarray(t, dtype=np.float64) for t, _ in items]
    weights = [float(w) for _, w in items]
    dim = thetas[0].shape
    if any(t.shape != dim or t.ndim != 1 for t in thetas):
        raise ShapeError("all updates must be 1-D vectors of equal length")
    if not all(w > 0 and math.isfinite(w) for w in weights):
        raise ProtocolError("aggregation weights must be finite and > 0")
    ref = thetas[0]
    total = np.zeros(dim)
    comp = np.zeros(dim)
    for t, w in zip(thetas[1:], weights[1:]):
        term = w * (t - ref)
        s = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - s) + term, (term - s) + total)
        total = s
    return ref + (total + comp) / math.fsum(weights)


def client_weight(client: ClientDataset, policy: str) -> float:
    if policy == "by-size":
        return float(client.n_k)
    if policy == "by-quality":
        return float(client.quality_weight)
    if policy == "uniform":
        return 1.0
    raise ConfigError(f"unknown weighting {policy!r}")


# -- rounds ----------------------------------------------------------------------

LocalFn = Callable[[ModelSpec, ClientDataset, np.ndarray, float, int], np.ndarray]
EvalFn = Callable[[np.ndarray], TaskScore]


@dataclass
class Federation:
    """Everything fixed for the lifetime of a run."""

    spec: ModelSpec
    clients: list
    fed: FedConfig
    seed: int
    evaluate: EvalFn
    local_fn: Optional[LocalFn] = None
    privacy: Optional[PrivacyConfig] = None
    workers: int = 1
    record_timing: bool = True

    def __post_init__(self):
        if len(self.clients) != self.fed.K:
            raise ConfigError(f"{len(self.clients)} clients supplied for K={self.fed.K}")
        if self.local_fn is None:
            fed = self.fed
            self.local_fn = lambda spec, c, th, eta, s: local_training(
                spec, c, th, eta, fed.local_epochs, fed.batch_size, s)


@dataclass(frozen=True)
class FedState:
    theta: np.ndarray
    controller: LrControllerState
    round_index: int = 0


def effective_workers(requested: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {cap!r}")
    return requested


def sample_participants(fed: FedConfig, seed: int, round_index: int) -> list[int]:
    m = fed.participants
    if m >= fed.K:
        return list(range(fed.K))
    r = _seeding.rng(_seeding.PARTICIPATION, seed, round_index)
    return sorted(int(i) for i in r.choice(fed.K, size=m, replace=False))


def run_round(federation: Federation, state: FedState) -> tuple[FedState, RoundRecord]:
    fd = federation
    r = state.round_index + 1
    start = time.perf_counter()
    chosen = [fd.clients[i] for i in sample_participants(fd.fed, fd.seed, r)]
    eta = state.controller.eta
    theta_g = state.theta

    def train(client: ClientDataset) -> np.ndarray:
        s = _seeding.derive_seed(_seeding.LOCAL, fd.seed, r, client.client_id)
        try:
            return fd.local_fn(fd.spec, client, theta_g, eta, s)
        except DivergenceError as exc:
            raise exc.located(round_index=r, client_id=client.client_id)

    workers = effective_workers(fd.workers)
    if workers > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_:
            local = list(pool_.map(train, chosen))
    else:
        local = [train(c) for c in chosen]

    priv = fd.privacy
    if priv is not None and priv.enabled:
        clipped = []
        for t in local:
            delta = t - theta_g
            c = clip_update(delta, priv.clip_norm)
            clipped.append(t if np.array_equal(c, delta) else theta_g + c)
        local = clipped
    weights = [client_weight(c, fd.fed.weighting) for c in chosen]
    theta_new = aggregate(list(zip(local, weights)), [c.client_id for c in chosen])
    if priv is not None and priv.enabled and priv.noise_sigma > 0:
        theta_new = theta_g + privatize_aggregate(theta_new - theta_g, priv, r)

    score = fd.evaluate(theta_new)
    if not math.isfinite(score.loss):
        raise DivergenceError("non-finite global validation loss", round_index=r)
    ctrl, _, delta = on_round(state.controller, score.loss)
    wall_ms = (time.perf_counter() - start) * 1e3 if fd.record_timing else 0.0
    nbytes = len(chosen) * theta_g.shape[0] * BYTES_PER_PARAM
    examples = sum(c.n_k for c in chosen) * fd.fed.local_epochs
    record = RoundRecord(r, score.loss, score.accuracy, eta, nbytes, nbytes, wall_ms,
                         delta, examples, tuple(c.client_id for c in chosen))
    return FedState(theta_new, ctrl, r), record


# -- whole experiments -----------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    theta: np.ndarray
    final: dict
    privacy_report: Optional[NoiseReport] = None
    run_id: str = field(default="")

    def metrics_csv(self) -> str:
        return records_to_csv(self.records)

    def save(self, directory) -> Path:
        """Write records (CSV + JSON-lines), final parameters and a summary."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "records.csv").write_text(self.metrics_csv(), encoding="utf-8")
        with open(d / "records.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_dict()) + "\n")
        spec = self.config.model
        (d / "params.json").write_text(json.dumps({
            "layout": layout_description(spec),
            "model": dataclasses.asdict(spec),
            "params": [float(v) for v in self.theta],
        }), encoding="utf-8")
        (d / "summary.json").write_text(json.dumps({
            "run_id": self.run_id,
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config),
            "final": self.final,
            "privacy": None if self.privacy_report is None else self.privacy_report.as_dict(),
        }, sort_keys=True, indent=2), encoding="utf-8")
        return d


def layout_description(spec: ModelSpec) -> str:
    if spec.kind == "linear":
        return (f"W[{spec.output_dim}x{spec.input_dim}] row-major, "
                f"b[{spec.output_dim}]")
    return (f"W1[{spec.hidden_dim}x{spec.input_dim}] row-major, b1[{spec.hidden_dim}], "
            f"W2[{spec.output_dim}x{spec.hidden_dim}] row-major, b2[{spec.output_dim}]")


def records_to_csv(records: Sequence[RoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row())
    return buf.getvalue()


def read_records(path) -> list[RoundRecord]:
    """Load records from a ``records.jsonl`` file (or the run directory)."""
    p = Path(path)
    if p.is_dir():
        p = p / "records.jsonl"
    return [RoundRecord.from_dict(json.loads(line))
            for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]


def load_params(path) -> np.ndarray:
    p = Path(path)
    if p.is_dir():
        p = p / "params.json"
    return np.array(json.loads(p.read_text(encoding="utf-8"))["params"], dtype=np.float64)


def evaluation_tasks(config: ExperimentConfig, stream: int, count: int) -> list:
    ev = config.eval
    return [holdout_new_task(config.family, _seeding.derive_seed(stream, config.seed, j),
                             ev.support_size, ev.query_size) for j in range(count)]


def build_federation(config: ExperimentConfig, clients=None) -> tuple[Federation, FedState]:
    """Assemble clients, validation scorer and initial state for ``config``."""
    fed = config.fed
    if clients is None:
        clients = partition_clients(config.family, fed.K, fed.examples_per_client,
                                    config.seed, fed.quality_weights)
    if config.strategy == "centralized":
        clients = [pool(clients)]
        fed = dataclasses.replace(fed, K=1, participation=1.0, quality_weights=None)

    adapt_steps = config.eval.adaptation_steps if config.strategy == "meta-fl" else 0
    beta = config.meta.beta if config.meta is not None else None
    validation = evaluation_tasks(config, _seeding.VALIDATION, config.eval.validation_tasks)
    spec = config.model

    def evaluate(theta):
        return score_tasks(spec, theta, validation, config.eval.regression_tolerance,
                           beta, adapt_steps)

    local_fn = None
    if config.strategy == "meta-fl":
        meta_cfg, epochs = config.meta, fed.local_epochs
        local_fn = lambda sp, c, th, eta, s: meta_local_training(sp, c, th, eta, meta_cfg, epochs)

    privacy = config.privacy
    if privacy.enabled and privacy.seed_stream is None:
        privacy = dataclasses.replace(
            privacy, seed_stream=_seeding.derive_seed(_seeding.PRIVACY, config.seed))
    federation = Federation(spec, clients, fed, config.seed, evaluate, local_fn, privacy,
                            fed.workers, config.record_timing)
    theta0 = init_params(spec, _seeding.derive_seed(_seeding.INIT, config.seed))
    state = FedState(theta0, LrControllerState.from_config(config.controller))
    return federation, state


def final_evaluation(config: ExperimentConfig, theta: np.ndarray) -> dict:
    tasks = evaluation_tasks(config, _seeding.EVALUATION, config.eval.eval_tasks)
    tol = config.eval.regression_tolerance
    before = score_tasks(config.model, theta, tasks, tol)
    out = {"loss": before.loss, "accuracy": before.accuracy,
           "pre_adaptation_loss": before.loss, "pre_adaptation_accuracy": before.accuracy,
           "adaptation_steps": 0}
    if config.strategy == "meta-fl" and config.eval.adaptation_steps > 0:
        after = score_tasks(config.model, theta, tasks, tol, config.meta.beta,
                            config.eval.adaptation_steps)
        out.update(loss=after.loss, accuracy=after.accuracy,
                   adaptation_steps=config.eval.adaptation_steps)
    return out


def run_experiment(config: ExperimentConfig, clients=None) -> ExperimentResult:
    """Run all ``config.fed.R`` rounds and score the final model on held-out tasks."""
    federation, state = build_federation(config, clients)
    records = []
    for _ in range(federation.fed.R):
        state, rec = run_round(federation, state)
        records.append(rec)
    report = None
    if federation.privacy is not None and federation.privacy.enabled:
        report = noise_multiplier_report(federation.privacy, federation.fed.participants,
                                         federation.fed.R)
    return ExperimentResult(config, records, state.theta, final_evaluation(config, state.theta),
                            report, config_hash(config))

