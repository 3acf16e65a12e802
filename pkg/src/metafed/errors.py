"""Exception hierarchy shared by every module of the simulator."""

from __future__ import annotations


class MetaFedError(Exception):
    """Base class for all simulator errors."""


class ConfigError(MetaFedError, ValueError):
    """Invalid configuration (bad spec, bad counts, unknown config keys)."""


class ShapeError(MetaFedError, ValueError):
    """Parameter vector or batch does not match the model layout."""


class ProtocolError(MetaFedError):
    """A federated protocol step was invoked with unusable inputs."""


class ControllerError(MetaFedError):
    """The learning-rate controller received a non-finite signal."""


class EvaluationError(MetaFedError, ValueError):
    """Metrics were requested on empty or malformed predictions."""


class DivergenceError(MetaFedError, FloatingPointError):
    """Training produced a non-finite loss or parameter.

    The location fields are filled in as the error propagates outwards, so a
    failure deep inside a client's local loop surfaces with the round and
    client that caused it.
    """

    def __init__(self, message: str, *, step: int | None = None,
                 client_id: int | None = None, round_index: int | None = None,
                 task_id: str | None = None, iteration: int | None = None):
        super().__init__(message)
        self.message = message
        self.step = step
        self.client_id = client_id
        self.round_index = round_index
        self.task_id = task_id
        self.iteration = iteration

    def located(self, **where) -> "DivergenceError":
        for key, value in where.items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self

    def __str__(self) -> str:
        where = [f"{k}={getattr(self, k)}"
                 for k in ("round_index", "client_id", "task_id", "iteration", "step")
                 if getattr(self, k) is not None]
        return self.message + (f" ({', '.join(where)})" if where else "")
