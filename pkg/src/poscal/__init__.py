"""Posterior-calibrated training of softmax classifiers.

The training objective adds to cross-entropy a penalty pulling every
predicted probability toward the empirical frequency of its (bin, class)
cell, with the empirical matrix re-estimated on the training set a fixed
number of times per epoch.
"""

from .binning import EmpiricalProbMatrix, ReliabilityTable, cal_emp_prob, export_reliability, reliability_table
from .core import (
    BinningConfig,
    ConfigError,
    Dataset,
    IngestionError,
    InvalidInputError,
    PosCalError,
    Split,
    TrainingDivergedError,
    bin_index,
    softmax,
)
from .loss import DistanceKind, LossReport, cal_loss, poscal_grad_logits, poscal_loss, xent_loss
from .metrics import MetricReport, accuracy, ece, evaluate, f1, matthews
from .model import Architecture, ModelParams, backward, forward, init_params, load_checkpoint, save_checkpoint
from .postcal import apply_temperature, fit_temperature
from .train import EarlyStopping, Mode, TrainConfig, TrainLog, build_schedule, train

__version__ = "0.1.0"
