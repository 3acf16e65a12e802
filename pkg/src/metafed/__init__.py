"""Desk-scale simulator for personalized (meta-)federated learning."""

from .config import (ControllerConfig, EvalConfig, ExperimentConfig, FedConfig, MetaConfig,
                     PrivacyConfig)
from .errors import (ConfigError, ControllerError, DivergenceError, EvaluationError,
                     MetaFedError, ProtocolError, ShapeError)
from .fedcore import RoundRecord, aggregate, local_training, run_experiment, run_round
from .harness import run_comparison
from .meta import adapt, meta_step, meta_train
from .model import Batch, ModelSpec, grad, hvp, init_params, loss
from .tasks import ClientDataset, Task, TaskFamily, holdout_new_task, partition_clients, sample_task

__version__ = "0.1.0"
