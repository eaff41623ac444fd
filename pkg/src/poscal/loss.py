"""Cross-entropy, calibration loss and their combined gradient w.r.t. logits.

All losses are sums over samples and classes. The calibration loss compares
each predicted probability with the empirical posterior of the (bin, class)
cell it falls in. The empirical matrix and the bin assignment are treated as
constants when differentiating.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .binning import EmpiricalProbMatrix
from .core import BinningConfig, InvalidInputError, check_labels, check_probs, softmax


class DistanceKind(str, enum.Enum):
    KL = "kl"
    MSE = "mse"


@dataclass(frozen=True)
class LossReport:
    xent: float
    cal: float
    lam: float
    total: float


def xent_loss(preds, labels, cfg: BinningConfig = BinningConfig()) -> float:
    """Summed negative log-likelihood, with probabilities clamped below at epsilon."""
    preds = check_probs(preds)
    y = check_labels(labels, *preds.shape)
    picked = preds[np.arange(len(y)), y]
    return float(-np.sum(np.log(np.maximum(picked, cfg.epsilon))))


def _check_lookup(q_lookup: EmpiricalProbMatrix, cfg: BinningConfig, k: int):
    if q_lookup.num_bins != cfg.num_bins or q_lookup.cfg.num_bins != cfg.num_bins:
        raise InvalidInputError(
            f"Q has {q_lookup.num_bins} bins but the binning config asks for {cfg.num_bins}")
    if q_lookup.num_classes != k:
        raise InvalidInputError(f"Q has {q_lookup.num_classes} classes, predictions have {k}")


def _distance_terms(p, q, cfg: BinningConfig, kind: DistanceKind):
    """Elementwise distance d(p, q) and its derivative in p."""
    kind = DistanceKind(kind)
    if kind is DistanceKind.MSE:
        diff = p - q
        return diff * diff, 2.0 * diff
    lo, hi = cfg.epsilon, 1.0 - cfg.epsilon
    pc = np.clip(p, lo, hi)
    qc = np.clip(q, lo, hi)
    log_ratio = np.log(pc / qc)
    inside = (p > lo) & (p < hi)
    return pc * log_ratio, np.where(inside, log_ratio + 1.0, 0.0)


def cal_loss(preds, q_lookup: EmpiricalProbMatrix, cfg: BinningConfig = BinningConfig(),
             kind: DistanceKind = DistanceKind.KL) -> float:
    preds = check_probs(preds)
    _check_lookup(q_lookup, cfg, preds.shape[1])
    terms, _ = _distance_terms(preds, q_lookup.lookup(preds), cfg, kind)
    return float(np.sum(terms))


def poscal_loss(preds, labels, q_lookup: EmpiricalProbMatrix, cfg: BinningConfig = BinningConfig(),
                kind: DistanceKind = DistanceKind.KL, lam: float = 1.0) -> LossReport:
    """Cross-entropy plus ``lam`` times the calibration loss."""
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    xent = xent_loss(preds, labels, cfg)
    cal = cal_loss(preds, q_lookup, cfg, kind)
    return LossReport(xent=xent, cal=cal, lam=float(lam), total=xent + lam * cal)


def poscal_grad_logits(logits, labels, q_lookup: EmpiricalProbMatrix | None,
                       cfg: BinningConfig = BinningConfig(),
                       kind: DistanceKind = DistanceKind.KL, lam: float = 1.0,
                       probs: np.ndarray | None = None) -> np.ndarray:
    """Gradient of :func:`poscal_loss` with respect to the logits.

    Args:
        logits: ``(n, k)`` pre-softmax scores.
        labels: ``(n,)`` class indices.
        q_lookup: empirical probability matrix; may be ``None`` when ``lam == 0``.
        cfg: binning configuration (bins and clamp epsilon).
        kind: distance used by the calibration term.
        lam: calibration weight.
        probs: ``softmax(logits)`` if the caller already has it.

    Returns:
        ``(n, k)`` array. With ``lam == 0`` this is exactly ``p - y`` on rows
        whose true-class probability is above the clamp.
    """
    p = softmax(logits) if probs is None else probs
    n, k = p.shape
    y = check_labels(labels, n, k)
    rows = np.arange(n)
    grad = p.copy()
    grad[rows, y] -= 1.0
    # log(max(p, eps)) is flat below eps
    grad[p[rows, y] < cfg.epsilon] = 0.0
    if lam == 0:
        return grad
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    if q_lookup is None:
        raise InvalidInputError("a Q matrix is required when lambda > 0")
    _check_lookup(q_lookup, cfg, k)
    _, dp = _distance_terms(p, q_lookup.lookup(p), cfg, kind)
    # softmax Jacobian-vector product: p * (g - <g, p>)
    dz = p * (dp - np.sum(dp * p, axis=1, keepdims=True))
    return grad + lam * dz
