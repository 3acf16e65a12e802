"""Round-level learning-rate control.

The global step size is adjusted once per round from the change in the
server-side validation loss: multiply by ``gamma_up`` after an improvement,
by ``gamma_down`` otherwise (a tie counts as no improvement), and clamp to
``[eta_min, eta_max]``. With both factors equal to 1 the rate never moves.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional

from .config import ControllerConfig
from .errors import ConfigError, ControllerError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LrControllerState:
    eta: float
    eta_min: float = 1e-5
    eta_max: float = 1.0
    gamma_up: float = 1.1
    gamma_down: float = 0.5
    prev_loss: Optional[float] = None

    def __post_init__(self):
        if not self.eta_min <= self.eta <= self.eta_max:
            raise ConfigError(f"eta={self.eta} outside [{self.eta_min}, {self.eta_max}]")
        if not self.gamma_up >= 1 or not 0 < self.gamma_down <= 1:
            raise ConfigError("need gamma_up >= 1 and 0 < gamma_down <= 1")

    @classmethod
    def from_config(cls, cfg: ControllerConfig) -> "LrControllerState":
        up, down = (cfg.gamma_up, cfg.gamma_down) if cfg.enabled else (1.0, 1.0)
        return cls(cfg.eta0, cfg.eta_min, cfg.eta_max, up, down)


def loss_reduction(prev_loss: float, current_loss: float) -> float:
    """Positive when the loss went down."""
    return prev_loss - current_loss


def update_eta(state: LrControllerState, delta_loss: float,
               current_loss: Optional[float] = None) -> LrControllerState:
    if not math.isfinite(delta_loss):
        raise ControllerError(f"non-finite loss reduction {delta_loss!r}")
    if delta_loss > 0:
        eta = min(state.eta * state.gamma_up, state.eta_max)
    else:
        eta = max(state.eta * state.gamma_down, state.eta_min)
    prev = state.prev_loss if current_loss is None else current_loss
    return dataclasses.replace(state, eta=eta, prev_loss=prev)


def on_round(state: LrControllerState, current_loss: float
             ) -> tuple[LrControllerState, float, Optional[float]]:
    """Feed one round's global loss; returns ``(state, next_eta, delta_loss)``.

    The first observation only records the loss. A non-finite reduction is
    logged and handled as a non-improving round.
    """
    if state.prev_loss is None:
        return dataclasses.replace(state, prev_loss=current_loss), state.eta, None
    delta = loss_reduction(state.prev_loss, current_loss)
    try:
        new = update_eta(state, delta, current_loss)
    except ControllerError:
        log.warning("controller saw non-finite loss reduction; decreasing eta")
        new = update_eta(state, -1.0, current_loss)
    return new, new.eta, delta
