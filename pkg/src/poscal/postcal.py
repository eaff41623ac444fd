"""Post-hoc temperature scaling fitted on held-out logits."""

from __future__ import annotations

import math

import numpy as np

from .core import InvalidInputError, check_labels, check_logits, softmax

T_MIN = 0.05
T_MAX = 20.0
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _check_temperature(t: float) -> float:
    t = float(t)
    if not T_MIN <= t <= T_MAX:
        raise InvalidInputError(f"temperature {t} outside [{T_MIN}, {T_MAX}]")
    return t


def apply_temperature(logits, t: float) -> np.ndarray:
    return softmax(check_logits(logits) / _check_temperature(t))


def temperature_nll(logits, labels, t: float) -> float:
    """Summed negative log-likelihood of ``softmax(logits / t)``, via log-sum-exp."""
    z = np.asarray(logits, dtype=np.float64) / t
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return float(np.sum(lse - z[np.arange(len(z)), labels]))


def golden_section(f, lo: float, hi: float, tol: float = 1e-4) -> float:
    """Minimise a unimodal ``f`` on ``[lo, hi]`` to an interval narrower than ``tol``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_temperature(val_logits, val_labels, tol: float = 1e-4) -> float:
    """Temperature minimising validation NLL, searched over ``ln t``.

    The search runs on ``[ln 0.05, ln 20]``. If the interior optimum is worse
    than ``t = 1`` (possible when the NLL is not unimodal) the identity
    temperature is returned instead.
    """
    z = check_logits(val_logits)
    if z.shape[0] == 0:
        raise InvalidInputError("validation set is empty")
    y = check_labels(val_labels, z.shape[0], z.shape[1])
    log_t = golden_section(lambda s: temperature_nll(z, y, math.exp(s)),
                           math.log(T_MIN), math.log(T_MAX), tol)
    t = min(max(math.exp(log_t), T_MIN), T_MAX)
    if temperature_nll(z, y, t) > temperature_nll(z, y, 1.0):
        return 1.0
    return t
