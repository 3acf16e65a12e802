"""Strategy comparison: centralized training vs. FedAvg vs. meta-federated.

Density regimes ("low", "moderate", "high") are emulated by heterogeneity
presets of the synthetic task family; "zero" is the IID control. Wall-clock
style metrics are replaced by simulation analogs:

* response time -> rounds until validation accuracy first reaches a target
* throughput    -> training examples processed per second of round time
* latency       -> mean wall time per round

Every report cell is computed from a run's persisted round records and final
evaluation, so a report can be rebuilt from disk without re-running anything.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .config import (ControllerConfig, EvalConfig, ExperimentConfig, FedConfig, MetaConfig,
                     config_hash)
from .errors import ConfigError, MetaFedError
from .evaluation import accuracy, rounds_to_target
from .fedcore import read_records, run_experiment
from .model import ModelSpec, loss
from .meta import adapt
from .tasks import TaskFamily

log = logging.getLogger(__name__)

LEVELS = ("zero", "low", "moderate", "high")

HETEROGENEITY_PRESETS = {
    # parameter spread for regression families
    "regression": {"zero": 0.0, "low": 0.25, "moderate": 0.5, "high": 1.0},
    # Dirichlet concentration for label skew: larger is closer to IID
    "classification": {"zero": 1e6, "low": 10.0, "moderate": 1.0, "high": 0.1},
}


def _preset_table(family: TaskFamily) -> dict:
    return HETEROGENEITY_PRESETS["classification" if family.is_classification else "regression"]


def heterogeneity_label(family: TaskFamily) -> str:
    for name, value in _preset_table(family).items():
        if value == family.heterogeneity:
            return name
    return f"{family.heterogeneity:g}"


def preset_config(strategy: str, level: str = "high", seed: int = 0,
                  family: str = "sine-regression", **overrides) -> ExperimentConfig:
    """Desk-scale comparison settings for one (strategy, level, seed) cell.

    ``sine-regression`` uses a 40-unit tanh network, 500 single-step rounds,
    and a fixed step size. ``shifted-linear-regression`` uses a 5-input linear
    model, 50 rounds, and the default learning-rate controller.
    """
    if family == "sine-regression":
        model = ModelSpec("one-hidden-layer", 1, 40, 1)
        fam = TaskFamily("sine-regression", 1, 1, 0.0, 0.0)
        fed = FedConfig(K=10, R=500, local_epochs=1, examples_per_client=20)
        controller = ControllerConfig(enabled=False, eta0=0.1)
    elif family == "shifted-linear-regression":
        model = ModelSpec("linear", 5, 0, 1)
        fam = TaskFamily("shifted-linear-regression", 5, 1, 0.0, 0.1)
        fed = FedConfig(K=10, R=50, local_epochs=1, examples_per_client=20)
        controller = ControllerConfig(enabled=True, eta0=0.1)
    elif family == "gaussian-class-clusters":
        model = ModelSpec("linear", 2, 0, 4, "softmax-cross-entropy")
        fam = TaskFamily("gaussian-class-clusters", 2, 4, 1.0, 1.0)
        fed = FedConfig(K=10, R=50, local_epochs=1, examples_per_client=40)
        controller = ControllerConfig(enabled=True, eta0=0.1)
    else:
        raise ConfigError(f"no comparison preset for family {family!r}")
    table = _preset_table(fam)
    if level not in table:
        raise ConfigError(f"unknown heterogeneity level {level!r}; choose from {LEVELS}")
    fam = dataclasses.replace(fam, heterogeneity=table[level])
    meta = MetaConfig(alpha=0.01, beta=0.05, inner_steps=1) if strategy == "meta-fl" else None
    cfg = ExperimentConfig(strategy=strategy, model=model, family=fam, fed=fed, meta=meta,
                           controller=controller, seed=seed,
                           eval=EvalConfig(adaptation_steps=5, target_accuracy=0.5))
    return cfg.replace(**overrides) if overrides else cfg


@dataclass(frozen=True)
class RunSummary:
    run_id: str
    strategy: str
    level: str
    heterogeneity: float
    seed: int
    config_hash: str
    final_accuracy: Optional[float] = None
    pre_adaptation_accuracy: Optional[float] = None
    final_loss: Optional[float] = None
    target_accuracy: Optional[float] = None
    rounds_to_target: Optional[int] = None
    examples_per_second: Optional[float] = None
    mean_round_ms: Optional[float] = None
    total_bytes_up: Optional[int] = None
    total_bytes_down: Optional[int] = None
    rounds: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def summarize_run(config: ExperimentConfig, records: Sequence, final: dict,
                  run_id: Optional[str] = None) -> RunSummary:
    """Report cells for one run; a pure function of its records and final scores."""
    target = config.eval.target_accuracy
    wall = math.fsum(r.wall_ms for r in records)
    examples = sum(r.examples for r in records)
    return RunSummary(
        run_id=run_id or config_hash(config),
        strategy=config.strategy,
        level=heterogeneity_label(config.family),
        heterogeneity=config.family.heterogeneity,
        seed=config.seed,
        config_hash=config_hash(config),
        final_accuracy=final["accuracy"],
        pre_adaptation_accuracy=final["pre_adaptation_accuracy"],
        final_loss=final["loss"],
        target_accuracy=target,
        rounds_to_target=None if target is None else rounds_to_target(records, target),
        examples_per_second=examples / (wall / 1e3) if wall > 0 else None,
        mean_round_ms=wall / len(records),
        total_bytes_up=sum(r.bytes_up for r in records),
        total_bytes_down=sum(r.bytes_down for r in records),
        rounds=len(records),
    )


@dataclass
class ComparisonReport:
    runs: list = field(default_factory=list)

    def strategies(self) -> list[str]:
        return list(dict.fromkeys(r.strategy for r in self.runs))

    def levels(self) -> list[str]:
        return list(dict.fromkeys(r.level for r in self.runs))

    def cells(self, strategy: str, level: str) -> list[RunSummary]:
        return [r for r in self.runs if r.strategy == strategy and r.level == level and r.ok]

    def table(self, metric: str) -> dict:
        """``{strategy: {level: mean metric over seeds}}`` (None when unavailable)."""
        out = {}
        for s in self.strategies():
            row = {}
            for lv in self.levels():
                vals = [getattr(r, metric) for r in self.cells(s, lv)]
                vals = [v for v in vals if v is not None]
                row[lv] = float(np.mean(vals)) if vals else None
            out[s] = row
        return out

    def provenance(self) -> dict:
        return {"seeds": sorted({r.seed for r in self.runs}),
                "config_hashes": {r.run_id: r.config_hash for r in self.runs}}


def run_comparison(configs: Sequence[ExperimentConfig], out_dir=None) -> ComparisonReport:
    """Run every config; a failing cell becomes an error row instead of aborting.

    When ``out_dir`` is given each run is persisted to ``out_dir/<run_id>``.
    """
    if not configs:
        raise ConfigError("run_comparison needs at least one config")
    models = {c.model for c in configs}
    kinds = {c.family.kind for c in configs}
    if len(models) > 1 or len(kinds) > 1:
        raise ConfigError("compared configs must share the model and task family")
    report = ComparisonReport()
    for cfg in configs:
        run_id = config_hash(cfg)
        try:
            result = run_experiment(cfg)
        except MetaFedError as exc:
            log.warning("run %s (%s) failed: %s", run_id, cfg.strategy, exc)
            report.runs.append(RunSummary(run_id, cfg.strategy, heterogeneity_label(cfg.family),
                                          cfg.family.heterogeneity, cfg.seed, run_id,
                                          error=f"{type(exc).__name__}: {exc}"))
            continue
        if out_dir is not None:
            result.save(Path(out_dir) / run_id)
        report.runs.append(summarize_run(cfg, result.records, result.final, run_id))
    return report


def report_from_dir(directory) -> ComparisonReport:
    """Rebuild a report from runs persisted by :func:`run_comparison`."""
    report = ComparisonReport()
    for summary_path in sorted(Path(directory).glob("*/summary.json")):
        data = json.loads(summary_path.read_text(encoding="utf-8"))
        cfg = ExperimentConfig.from_dict(data["config"])
        records = read_records(summary_path.parent)
        report.runs.append(summarize_run(cfg, records, data["final"], data["run_id"]))
    if not report.runs:
        raise FileNotFoundError(f"no persisted runs under {directory}")
    return report


# -- rendering -------------------------------------------------------------------

_RUN_FIELDS = [f.name for f in dataclasses.fields(RunSummary)]


def _fmt(value, pct=False) -> str:
    if value is None:
        return "-"
    if pct:
        return f"{100 * value:.1f}%"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _markdown(report: ComparisonReport) -> str:
    levels = report.levels()
    lines = []

    def table(title, metric, pct=False, fmt=None):
        data = report.table(metric)
        lines.append(f"### {title}\n")
        lines.append("| Strategy | " + " | ".join(levels) + " |")
        lines.append("|---|" + "---|" * len(levels))
        for s, row in data.items():
            cells = [fmt(row[lv]) if fmt else _fmt(row[lv], pct) for lv in levels]
            lines.append(f"| {s} | " + " | ".join(cells) + " |")
        lines.append("")

    table("Accuracy on held-out tasks", "final_accuracy", pct=True)
    table("Rounds to target accuracy (mean over runs that reached it)", "rounds_to_target")
    table("Throughput (training examples / s)", "examples_per_second")
    table("Latency (mean ms per round)", "mean_round_ms")
    table("Uplink bytes per run", "total_bytes_up")
    never = [r for r in report.runs if r.ok and r.target_accuracy is not None
             and r.rounds_to_target is None]
    if never:
        lines.append(f"{len(never)} run(s) never reached the target accuracy.\n")
    failed = [r for r in report.runs if not r.ok]
    for r in failed:
        lines.append(f"- run {r.run_id} ({r.strategy}, {r.level}) failed: {r.error}")
    prov = report.provenance()
    lines.append("---")
    lines.append(f"seeds: {', '.join(map(str, prov['seeds']))}")
    lines.append("config hashes: " + ", ".join(sorted(set(prov["config_hashes"].values()))))
    return "\n".join(lines) + "\n"


def _csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_RUN_FIELDS)
    for r in report.runs:
        w.writerow([_csv_cell(getattr(r, f)) for f in _RUN_FIELDS])
    return buf.getvalue()


def _csv_cell(value):
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else value


def _json(report: ComparisonReport) -> str:
    return json.dumps({
        "runs": [dataclasses.asdict(r) for r in report.runs],
        "tables": {m: report.table(m) for m in
                   ("final_accuracy", "rounds_to_target", "examples_per_second",
                    "mean_round_ms", "total_bytes_up")},
        "provenance": report.provenance(),
    }, indent=2, sort_keys=True)


FORMATS = {"csv": ("report.csv", _csv), "json": ("report.json", _json),
           "md": ("report.md", _markdown), "markdown-table": ("report.md", _markdown)}


def render_report(report: ComparisonReport, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r}")
    return FORMATS[fmt][1](report)


def emit_report(report: ComparisonReport, fmt: str, destination) -> Path:
    """Write the report; ``destination`` may be a directory or a file path."""
    dest = Path(destination)
    if dest.is_dir() or not dest.suffix:
        dest.mkdir(parents=True, exist_ok=True)
        dest = dest / FORMATS[fmt][0] if fmt in FORMATS else dest
    text = render_report(report, fmt)
    dest.write_text(text, encoding="utf-8")
    return dest


def read_report_csv(path) -> list[dict]:
    """Parse a CSV report back into typed dicts (inverse of the csv writer)."""
    types = {f.name: f.type for f in dataclasses.fields(RunSummary)}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                t = str(types[k])
                if v == "":
                    row[k] = None
                elif "float" in t:
                    row[k] = float(v)
                elif "int" in t:
                    row[k] = int(v)
                else:
                    row[k] = v
            rows.append(row)
    return rows


# -- statistics --------------------------------------------------------------------

def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Student-t confidence interval for the mean."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two values for a confidence interval")
    m = float(x.mean())
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))
    return m - half, m + half


def ci_overlap(a: Sequence[float], b: Sequence[float], level: float = 0.95) -> bool:
    lo_a, hi_a = mean_ci(a, level)
    lo_b, hi_b = mean_ci(b, level)
    return lo_a <= hi_b and lo_b <= hi_a


def personalization_gap(spec: ModelSpec, theta: np.ndarray, tasks, beta: float,
                        steps: int) -> float:
    """Mean query loss before adaptation minus after ``steps`` adaptation steps."""
    gaps = []
    for task in tasks:
        before = loss(spec, theta, task.query)
        after = loss(spec, adapt(spec, theta, task, beta, steps), task.query)
        gaps.append(before - after)
    return float(np.mean(gaps))
