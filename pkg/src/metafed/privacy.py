"""Clipped, noised aggregation.

Each client's update delta is clipped to L2 norm ``clip_norm`` before
averaging, and i.i.d. Gaussian noise of per-coordinate std ``noise_sigma`` is
added to the averaged delta. No (epsilon, delta) accounting is attempted;
:func:`noise_multiplier_report` only states the mechanism parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _seeding
from .config import PrivacyConfig
from .errors import ConfigError


def clip_update(delta: np.ndarray, clip_norm: float) -> np.ndarray:
    """Scale ``delta`` down to norm ``clip_norm`` if it is longer."""
    if not clip_norm > 0:
        raise ConfigError("clip_norm must be > 0")
    delta = np.asarray(delta, dtype=np.float64)
    norm = float(np.linalg.norm(delta))
    if norm <= clip_norm:
        return delta.copy()
    out = delta * (clip_norm / norm)
    # rounding in the rescale can leave the norm a hair above the bound
    while np.linalg.norm(out) > clip_norm:
        out = out * (1.0 - 2.0 ** -52)
    return out


def noise_rng(cfg: PrivacyConfig, round_index: int) -> np.random.Generator:
    stream = 0 if cfg.seed_stream is None else cfg.seed_stream
    return _seeding.rng(_seeding.PRIVACY, stream, round_index)


def privatize_aggregate(mean_delta: np.ndarray, cfg: PrivacyConfig,
                        round_index: int) -> np.ndarray:
    """``mean_delta`` plus N(0, sigma^2) noise keyed by ``(seed_stream, round)``."""
    if not cfg.enabled:
        raise ConfigError("privatize_aggregate called with privacy disabled")
    mean_delta = np.asarray(mean_delta, dtype=np.float64)
    if cfg.noise_sigma == 0:
        return mean_delta.copy()
    noise = noise_rng(cfg, round_index).standard_normal(mean_delta.shape)
    return mean_delta + cfg.noise_sigma * noise


@dataclass(frozen=True)
class NoiseReport:
    noise_multiplier: float
    sensitivity: float
    participants: int
    rounds: int
    noise_sigma: float
    clip_norm: float
    no_privacy: bool
    label: str = "mechanism parameters, not an (epsilon, delta) claim"

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def noise_multiplier_report(cfg: PrivacyConfig, participants: int, rounds: int) -> NoiseReport:
    """Effective noise multiplier ``sigma * K / C`` and per-round sensitivity ``C / K``.

    ``participants`` is the number of clients averaged per round.
    """
    if not cfg.enabled:
        raise ConfigError("privacy is disabled; nothing to report")
    if participants < 1:
        raise ConfigError("participants must be >= 1")
    sensitivity = cfg.clip_norm / participants
    z = cfg.noise_sigma / sensitivity
    return NoiseReport(z, sensitivity, participants, rounds, cfg.noise_sigma,
                       cfg.clip_norm, no_privacy=cfg.noise_sigma == 0)
