"""Mini-batch SGD with scheduled refreshes of the empirical probability matrix.

Three modes share one loop:

* ``mle``: summed cross-entropy only.
* ``l1``: cross-entropy plus ``l1_weight * sum|W|`` over weight matrices.
* ``poscal``: cross-entropy plus ``lam`` times the calibration loss against Q.

Q is re-estimated from a full pass over the training set at ``u`` evenly
spaced steps of every epoch, and once from the freshly initialised model
before the first update.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .binning import EmpiricalProbMatrix, cal_emp_prob
from .core import BinningConfig, ConfigError, Dataset, InvalidInputError, TrainingDivergedError, softmax
from .loss import DistanceKind, cal_loss, poscal_grad_logits, xent_loss
from .model import Architecture, ModelParams, backward, forward, init_params

logger = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    MLE = "mle"
    L1 = "l1"
    POSCAL = "poscal"


@dataclass
class TrainConfig:
    mode: Mode = Mode.POSCAL
    architecture: Architecture = Architecture.MLP
    hidden_width: int = 64
    epochs: int = 20
    learning_rate: float = 0.1
    batch_size: int = 32
    lam: float = 1.0
    q_updates_per_epoch: int = 5
    binning: BinningConfig = field(default_factory=BinningConfig)
    distance: DistanceKind = DistanceKind.KL
    l1_weight: float | None = None
    seed: int = 0
    early_stopping: bool = True
    eval_every_steps: int = 50
    patience: int = 10

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.architecture = Architecture(self.architecture)
        self.distance = DistanceKind(self.distance)
        if self.l1_weight is None:
            self.l1_weight = 1e-8 if self.mode is Mode.L1 else 0.0
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.q_updates_per_epoch < 1:
            raise ConfigError("u must be >= 1")
        if self.patience < 1 or self.eval_every_steps < 1:
            raise ConfigError("patience and eval_every_steps must be >= 1")
        if self.l1_weight < 0:
            raise ConfigError("l1_weight must be >= 0")

    @property
    def effective_lam(self) -> float:
        return self.lam if self.mode is Mode.POSCAL else 0.0

    @property
    def effective_l1(self) -> float:
        return self.l1_weight if self.mode is Mode.L1 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("mode", "architecture", "distance"):
            d[key] = getattr(self, key).value
        return d


def build_schedule(steps_per_epoch: int, u: int) -> list[int]:
    """1-based steps closing each of ``u`` equal parts of an epoch.

    >>> build_schedule(7, 2)
    [3, 7]
    """
    if steps_per_epoch < 1:
        raise InvalidInputError("steps_per_epoch must be >= 1")
    if not 1 <= u <= steps_per_epoch:
        raise InvalidInputError(f"u must lie in [1, {steps_per_epoch}], got {u}")
    part = steps_per_epoch // u
    return [part * i for i in range(1, u)] + [steps_per_epoch]


class EarlyStopping:
    """Stop once a validation loss exceeds the mean of up to ``patience`` previous ones."""

    def __init__(self, patience: int = 10):
        if patience < 1:
            raise ConfigError("patience must be >= 1")
        self.patience = patience
        self.history: list[float] = []

    def __call__(self, val_loss: float) -> bool:
        prior = self.history[-self.patience:]
        self.history.append(val_loss)
        if not prior:
            return False
        return val_loss > sum(prior) / len(prior)


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    q_refreshes: list[dict] = field(default_factory=list)
    stop_reason: str = "epochs-exhausted"
    final_step: int = 0

    def events(self):
        """All events in chronological order, as JSON-ready dicts."""
        tagged = ([("step", e) for e in self.steps] + [("eval", e) for e in self.evals]
                  + [("q_refresh", e) for e in self.q_refreshes])
        # refresh at step s happens after update s; evals after that
        order = {"step": 0, "q_refresh": 1, "eval": 2}
        tagged.sort(key=lambda t: (t[1]["step"], order[t[0]]))
        for kind, e in tagged:
            yield {"event": kind, **e}
        yield {"event": "stop", "reason": self.stop_reason, "step": self.final_step}

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for event in self.events():
                fh.write(json.dumps(event, sort_keys=True) + "\n")


def _l1_penalty(params: ModelParams, weight: float) -> float:
    if weight == 0:
        return 0.0
    return weight * sum(float(np.abs(w).sum()) for w in params.weights)


def objective(params: ModelParams, data: Dataset, q: EmpiricalProbMatrix | None,
              cfg: TrainConfig) -> dict:
    """The mode's own summed loss on a dataset (used for validation)."""
    probs = softmax(forward(params, data.features).logits)
    xent = xent_loss(probs, data.labels, cfg.binning)
    lam = cfg.effective_lam
    cal = cal_loss(probs, q, cfg.binning, cfg.distance) if lam > 0 else 0.0
    total = xent + lam * cal + _l1_penalty(params, cfg.effective_l1)
    return {"xent": xent, "cal": cal, "total": total}


def _refresh_q(params: ModelParams, data: Dataset, cfg: TrainConfig) -> EmpiricalProbMatrix:
    probs = softmax(forward(params, data.features).logits)
    return cal_emp_prob(probs, data.labels, cfg.binning)


def _validation_loss(params, val, q, cfg) -> float:
    return objective(params, val, q, cfg)["total"]


def train(data: Dataset, val: Dataset | None, cfg: TrainConfig,
          params: ModelParams | None = None) -> tuple[ModelParams, TrainLog]:
    """Fit a classifier with plain SGD on the configured objective.

    Args:
        data: training split; Q is always estimated on all of it.
        val: validation split for early stopping, or ``None`` to disable it.
        cfg: training configuration.
        params: optional starting point; default is a seeded initialisation.

    Returns:
        Final parameters and the training log.

    Raises:
        TrainingDivergedError: the batch loss or parameters became non-finite.
    """
    if val is not None and val.num_classes != data.num_classes:
        raise ConfigError("train and validation class counts differ")
    rng = np.random.default_rng(cfg.seed)
    init_rng, shuffle_rng = rng.spawn(2)
    if params is None:
        params = init_params(cfg.architecture, data.p, data.num_classes, cfg.hidden_width, init_rng)
    else:
        params = params.copy()

    steps_per_epoch = math.ceil(data.n / cfg.batch_size)
    u = cfg.q_updates_per_epoch
    if u > steps_per_epoch:
        raise ConfigError(f"u={u} exceeds the {steps_per_epoch} steps in an epoch")
    schedule = set(build_schedule(steps_per_epoch, u))
    lam, l1 = cfg.effective_lam, cfg.effective_l1
    stopper = EarlyStopping(cfg.patience) if cfg.early_stopping and val is not None else None

    log = TrainLog()
    q = _refresh_q(params, data, cfg)
    log.q_refreshes.append({"epoch": 0, "epoch_step": 0, "step": 0})

    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(data.n)
        for epoch_step in range(1, steps_per_epoch + 1):
            step += 1
            idx = order[(epoch_step - 1) * cfg.batch_size: epoch_step * cfg.batch_size]
            x, y = data.features[idx], data.labels[idx]

            trace = forward(params, x)
            if not np.all(np.isfinite(trace.logits)):
                raise TrainingDivergedError(step, "logits are not finite")
            probs = softmax(trace.logits)
            xent = xent_loss(probs, y, cfg.binning)
            cal = cal_loss(probs, q, cfg.binning, cfg.distance) if lam > 0 else 0.0
            total = xent + lam * cal + _l1_penalty(params, l1)
            if not math.isfinite(total):
                raise TrainingDivergedError(step)
            log.steps.append({"step": step, "epoch": epoch, "xent": xent, "cal": cal, "total": total,
                              "mean_total": total / len(idx)})

            g_logits = poscal_grad_logits(trace.logits, y, q, cfg.binning, cfg.distance, lam, probs=probs)
            grads = backward(trace, params, g_logits)
            for w, dw in zip(params.weights, grads.weights):
                if l1:
                    dw = dw + l1 * np.sign(w)
                w -= cfg.learning_rate * dw
            for b, db in zip(params.biases, grads.biases):
                b -= cfg.learning_rate * db
            if not params.all_finite():
                raise TrainingDivergedError(step, "parameters are not finite")

            evaluate_now = stopper is not None and step % cfg.eval_every_steps == 0
            try:
                if epoch_step in schedule:
                    q = _refresh_q(params, data, cfg)
                    log.q_refreshes.append({"epoch": epoch, "epoch_step": epoch_step, "step": step})
                if evaluate_now:
                    val_loss = _validation_loss(params, val, q, cfg)
            except InvalidInputError as exc:
                # finite but huge weights can still overflow on a full pass
                raise TrainingDivergedError(step, str(exc)) from exc

            if evaluate_now:
                if not math.isfinite(val_loss):
                    raise TrainingDivergedError(step, "validation loss is not finite")
                log.evals.append({"step": step, "val_loss": val_loss, "mean_val_loss": val_loss / val.n})
                if stopper(val_loss):
                    logger.info("early stop at step %d (val loss %.6g)", step, val_loss)
                    log.stop_reason = "early-stopped"
                    log.final_step = step
                    return params, log
    log.final_step = step
    return params, log
