"""Empirical posteriors per (bin, class) and reliability tables.

Every class column of a prediction matrix is binned independently on the
equal-width grid of :class:`~poscal.core.BinningConfig`. Within a cell the
empirical posterior is the fraction of samples whose true label is that
class. Cells nobody falls into get the bin midpoint, i.e. the value a
perfectly calibrated model would have there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinningConfig, InvalidInputError, bin_indices, check_labels, check_probs


@dataclass
class EmpiricalProbMatrix:
    """``q[b, j]``: empirical probability of class ``j`` among samples in bin ``b``."""

    q: np.ndarray
    counts: np.ndarray
    cfg: BinningConfig

    @property
    def num_bins(self) -> int:
        return self.q.shape[0]

    @property
    def num_classes(self) -> int:
        return self.q.shape[1]

    def lookup(self, preds: np.ndarray) -> np.ndarray:
        """Return the ``(n, k)`` matrix of q values each prediction maps to."""
        preds = np.asarray(preds, dtype=np.float64)
        if preds.ndim != 2 or preds.shape[1] != self.num_classes:
            raise InvalidInputError(
                f"predictions have {preds.shape[-1]} columns, Q has {self.num_classes}")
        bins = bin_indices(preds, self.cfg)
        return self.q[bins, np.arange(self.num_classes)[None, :]]


def _midpoints(cfg: BinningConfig) -> np.ndarray:
    return (np.arange(cfg.num_bins) + 0.5) / cfg.num_bins


def _tally(preds, labels, cfg: BinningConfig):
    preds = check_probs(preds)
    n, k = preds.shape
    labels = check_labels(labels, n, k)
    bins = bin_indices(preds, cfg)
    hits = labels[:, None] == np.arange(k)[None, :]
    # flat (bin, class) cell ids so one bincount handles every class at once
    cell = bins * k + np.arange(k)[None, :]
    size = cfg.num_bins * k
    counts = np.bincount(cell.ravel(), minlength=size).reshape(cfg.num_bins, k)
    positives = np.bincount(cell.ravel(), weights=hits.ravel().astype(np.float64),
                            minlength=size).reshape(cfg.num_bins, k)
    pred_sums = np.bincount(cell.ravel(), weights=preds.ravel(),
                            minlength=size).reshape(cfg.num_bins, k)
    return preds, counts, positives, pred_sums


def cal_emp_prob(preds, labels, cfg: BinningConfig = BinningConfig()) -> EmpiricalProbMatrix:
    """Estimate the ``B x K`` empirical probability matrix from predictions.

    Args:
        preds: ``(n, k)`` row-stochastic predicted posteriors.
        labels: ``(n,)`` true class indices.
        cfg: binning configuration.

    Returns:
        EmpiricalProbMatrix with ``q`` and the per-cell sample counts.
    """
    _, counts, positives, _ = _tally(preds, labels, cfg)
    fallback = np.broadcast_to(_midpoints(cfg)[:, None], counts.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(counts > 0, positives / np.maximum(counts, 1), fallback)
    return EmpiricalProbMatrix(q=q, counts=counts, cfg=cfg)


@dataclass
class ReliabilityTable:
    """Per (bin, class) occupancy, mean prediction and empirical posterior.

    Arrays are ``(B, K)``. Empty cells carry the bin midpoint in both
    ``mean_pred`` and ``empirical`` so they sit on the diagonal.
    """

    counts: np.ndarray
    mean_pred: np.ndarray
    empirical: np.ndarray
    n: int
    cfg: BinningConfig

    @property
    def num_classes(self) -> int:
        return self.counts.shape[1]


def reliability_table(preds, labels, cfg: BinningConfig = BinningConfig()) -> ReliabilityTable:
    _, counts, positives, pred_sums = _tally(preds, labels, cfg)
    mid = np.broadcast_to(_midpoints(cfg)[:, None], counts.shape)
    safe = np.maximum(counts, 1)
    mean_pred = np.where(counts > 0, pred_sums / safe, mid)
    empirical = np.where(counts > 0, positives / safe, mid)
    return ReliabilityTable(counts=counts, mean_pred=mean_pred, empirical=empirical,
                            n=int(len(labels)), cfg=cfg)


def export_reliability(table: ReliabilityTable, preds=None) -> dict:
    """Plot data for prediction histograms and reliability diagrams.

    ``frequency`` is the share of samples whose predicted probability for the
    class falls in each bin (top panel); ``mean_pred``/``empirical`` are the
    reliability points (bottom panel, diagonal = perfect calibration).
    """
    if preds is not None:
        preds = check_probs(preds)
        if preds.shape != (table.n, table.num_classes):
            raise InvalidInputError("predictions do not match the reliability table")
    edges = table.cfg.edges()
    classes = []
    for j in range(table.num_classes):
        counts = table.counts[:, j]
        classes.append({
            "class": j,
            "bin_lo": edges[:-1].tolist(),
            "bin_hi": edges[1:].tolist(),
            "count": [int(c) for c in counts],
            "frequency": (counts / table.n).tolist(),
            "mean_pred": table.mean_pred[:, j].tolist(),
            "empirical": table.empirical[:, j].tolist(),
        })
    return {"num_bins": table.cfg.num_bins, "n": table.n, "classes": classes}


def table_from_record(record: dict, epsilon: float = BinningConfig().epsilon) -> ReliabilityTable:
    """Rebuild a :class:`ReliabilityTable` from :func:`export_reliability` output."""
    cfg = BinningConfig(num_bins=int(record["num_bins"]), epsilon=epsilon)
    cls = sorted(record["classes"], key=lambda c: c["class"])
    return ReliabilityTable(
        counts=np.array([c["count"] for c in cls], dtype=np.int64).T,
        mean_pred=np.array([c["mean_pred"] for c in cls], dtype=np.float64).T,
        empirical=np.array([c["empirical"] for c in cls], dtype=np.float64).T,
        n=int(record["n"]),
        cfg=cfg,
    )
