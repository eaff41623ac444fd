"""Domain types and elementary numeric operations shared across the package."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class PosCalError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PosCalError, ValueError):
    """An argument violates the documented shape or value contract."""


class ConfigError(PosCalError):
    """Experiment or training configuration is inconsistent."""


class IngestionError(PosCalError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingDivergedError(PosCalError):
    """The training loss became non-finite."""

    def __init__(self, step: int, message: str = "loss is not finite"):
        super().__init__(f"training diverged at step {step}: {message}")
        self.step = step


class Split(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass
class Dataset:
    """Feature matrix with integer class labels.

    Attributes:
        features: ``(n, p)`` float64 array, all finite.
        labels: ``(n,)`` int array with values in ``[0, num_classes)``.
        num_classes: number of classes ``k >= 2``.
        split: which partition this dataset represents.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: Split = Split.TRAIN

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise InvalidInputError("features must be a 2-d array")
        n, p = self.features.shape
        if n < 1 or p < 1:
            raise InvalidInputError(f"dataset needs n >= 1 and p >= 1, got {self.features.shape}")
        if self.labels.shape != (n,):
            raise InvalidInputError(f"expected {n} labels, got shape {self.labels.shape}")
        if self.num_classes < 2:
            raise InvalidInputError("num_classes must be >= 2")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise InvalidInputError("label index out of range")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInputError("features contain NaN or Inf")
        self.split = Split(self.split)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, split: Split | None = None) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes,
                       self.split if split is None else split)


@dataclass(frozen=True)
class BinningConfig:
    """Equal-width binning of ``[0, 1]`` plus the probability clamp used in logs."""

    num_bins: int = 10
    epsilon: float = 1e-6

    def __post_init__(self):
        if int(self.num_bins) != self.num_bins or self.num_bins < 2:
            raise InvalidInputError(f"num_bins must be an integer >= 2, got {self.num_bins}")
        if not 0.0 < self.epsilon <= 0.01:
            raise InvalidInputError(f"epsilon must lie in (0, 0.01], got {self.epsilon}")

    def edges(self) -> np.ndarray:
        return np.arange(self.num_bins + 1) / self.num_bins


def check_logits(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise InvalidInputError("logits must be a 2-d (n, k) array")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain NaN or Inf")
    return z


def check_probs(probs, atol: float = 1e-9) -> np.ndarray:
    """Validate a row-stochastic ``(n, k)`` prediction matrix."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
        raise InvalidInputError(f"predictions must be (n >= 1, k >= 2), got {p.shape}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise InvalidInputError("predictions must lie in [0, 1]")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > atol:
        raise InvalidInputError("prediction rows must sum to 1")
    return p


def check_labels(labels, n: int, k: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise InvalidInputError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise InvalidInputError("labels must be integer class indices")
    y = y.astype(np.int64)
    if n and (y.min() < 0 or y.max() >= k):
        raise InvalidInputError(f"labels must lie in [0, {k})")
    return y


def softmax(logits) -> np.ndarray:
    """Row-wise softmax in max-subtracted form."""
    z = check_logits(logits)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def bin_index(prob: float, cfg: BinningConfig = BinningConfig()) -> int:
    """Equal-width bin of a probability; the last bin is closed at 1.0."""
    prob = float(prob)
    if not 0.0 <= prob <= 1.0:
        raise InvalidInputError(f"probability {prob} outside [0, 1]")
    return min(math.floor(prob * cfg.num_bins), cfg.num_bins - 1)


def bin_indices(probs: np.ndarray, cfg: BinningConfig = BinningConfig()) -> np.ndarray:
    """Vectorised :func:`bin_index` over an array of probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0 or not np.all(np.isfinite(probs))):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    idx = np.floor(probs * cfg.num_bins).astype(np.int64)
    return np.minimum(idx, cfg.num_bins - 1)


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out
