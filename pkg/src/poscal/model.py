"""Softmax classifiers: logistic regression and a one-hidden-layer ReLU MLP."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import InvalidInputError

CHECKPOINT_VERSION = 1


class Architecture(str, enum.Enum):
    LOGREG = "logreg"
    MLP = "mlp"


@dataclass
class ModelParams:
    """Weights ``W`` of shape ``(fan_in, fan_out)`` and biases per layer.

    Logistic regression has one layer ``p -> k``; the MLP has ``p -> h -> k``.
    """

    architecture: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_width: int | None = None

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        expected = 1 if self.architecture is Architecture.LOGREG else 2
        if len(self.weights) != expected or len(self.biases) != expected:
            raise InvalidInputError(f"{self.architecture.value} needs {expected} layer(s)")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidInputError("inconsistent layer shapes")
        for w_in, w_out in zip(self.weights, self.weights[1:]):
            if w_in.shape[1] != w_out.shape[0]:
                raise InvalidInputError("consecutive layers do not chain")
        if self.architecture is Architecture.MLP:
            self.hidden_width = self.weights[0].shape[1]

    @property
    def num_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.architecture, [w.copy() for w in self.weights],
                           [b.copy() for b in self.biases], self.hidden_width)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class ParamGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)
    logits: np.ndarray | None = None


def init_params(architecture, num_features: int, num_classes: int, hidden_width: int = 64,
                seed: int | np.random.Generator = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    architecture = Architecture(architecture)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if architecture is Architecture.LOGREG:
        dims = [num_features, num_classes]
    else:
        if hidden_width < 1:
            raise InvalidInputError("hidden_width must be >= 1")
        dims = [num_features, hidden_width, num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(architecture, weights, biases,
                       hidden_width if architecture is Architecture.MLP else None)


def forward(params: ModelParams, features) -> ForwardTrace:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.num_features:
        raise InvalidInputError(
            f"expected features of width {params.num_features}, got shape {x.shape}")
    trace = ForwardTrace(inputs=x)
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        trace.pre_activations.append(a)
        if i < last:
            h = np.maximum(a, 0.0)
            trace.activations.append(h)
        else:
            trace.logits = a
    return trace


def backward(trace: ForwardTrace, params: ModelParams, grad_logits) -> ParamGrads:
    """Backpropagate ``dL/dlogits`` to every weight and bias."""
    g = np.asarray(grad_logits, dtype=np.float64)
    if trace.logits is None or g.shape != trace.logits.shape:
        raise InvalidInputError("grad_logits shape does not match the forward trace")
    layer_inputs = [trace.inputs] + trace.activations
    dws, dbs = [], []
    for i in range(len(params.weights) - 1, -1, -1):
        dws.append(layer_inputs[i].T @ g)
        dbs.append(g.sum(axis=0))
        if i > 0:
            g = (g @ params.weights[i].T) * (trace.pre_activations[i - 1] > 0)
    return ParamGrads(weights=dws[::-1], biases=dbs[::-1])


def predict_logits(params: ModelParams, features) -> np.ndarray:
    return forward(params, features).logits


def save_checkpoint(params: ModelParams, path) -> None:
    """Write parameters to an ``.npz`` archive with a JSON header."""
    header = {
        "version": CHECKPOINT_VERSION,
        "architecture": params.architecture.value,
        "hidden_width": params.hidden_width,
        "shapes": [list(a.shape) for a in params.arrays()],
    }
    arrays = {f"param_{i}": a for i, a in enumerate(params.arrays())}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path) -> ModelParams:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {header.get('version')}")
        arrays = [data[f"param_{i}"] for i in range(len(header["shapes"]))]
    for a, shape in zip(arrays, header["shapes"]):
        if list(a.shape) != shape:
            raise InvalidInputError("checkpoint array shape does not match its header")
    return ModelParams(header["architecture"], arrays[0::2], arrays[1::2], header["hidden_width"])
