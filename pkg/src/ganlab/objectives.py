"""Scalar GAN objective functions and their first two derivatives.

Two kinds are supported: the logistic loss ``f(t) = -log(1 + exp(-t))``
used by the standard GAN, and the linear loss ``f(t) = t`` used by WGANs.
Every evaluator accepts a Python float (fast scalar path) or a numpy array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedLossError

FD_STEP = 1e-5
DERIVATIVE_TOL = 1e-6

LOSS_KINDS = ("logistic", "linear")


def _is_scalar(t) -> bool:
    return isinstance(t, (float, int))


def logistic_f(t):
    """-log(1 + exp(-t)), evaluated without overflow."""
    if _is_scalar(t):
        if t >= 0:
            return -math.log1p(math.exp(-t))
        return t - math.log1p(math.exp(t))
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, -np.log1p(np.exp(-np.abs(t))), t - np.log1p(np.exp(-np.abs(t))))


def logistic_f1(t):
    """f'(t) = 1 / (1 + exp(t)) = sigmoid(-t)."""
    if _is_scalar(t):
        if t >= 0:
            e = math.exp(-t)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(t))
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def logistic_f2(t):
    """f''(t) = -sigmoid(t) * sigmoid(-t)."""
    if _is_scalar(t):
        e = math.exp(-abs(t))
        return -e / ((1.0 + e) * (1.0 + e))
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    return -e / ((1.0 + e) * (1.0 + e))


def linear_f(t):
    if _is_scalar(t):
        return float(t)
    return np.asarray(t, dtype=float).copy()


def linear_f1(t):
    if _is_scalar(t):
        return 1.0
    return np.ones_like(np.asarray(t, dtype=float))


def linear_f2(t):
    if _is_scalar(t):
        return 0.0
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class LossFunction:
    kind: str
    f: Callable
    f1: Callable
    f2: Callable

    def __repr__(self) -> str:
        return f"LossFunction({self.kind!r})"


_LOSSES = {
    "logistic": LossFunction("logistic", logistic_f, logistic_f1, logistic_f2),
    "linear": LossFunction("linear", linear_f, linear_f1, linear_f2),
}


def make_loss(kind: str) -> LossFunction:
    try:
        return _LOSSES[kind]
    except KeyError:
        raise UnsupportedLossError(
            f"unsupported loss kind {kind!r}; expected one of {LOSS_KINDS}"
        ) from None


@dataclass(frozen=True)
class DerivativeCheckReport:
    f1_max_error: float
    f2_max_error: float
    tol: float = DERIVATIVE_TOL

    @property
    def passed(self) -> bool:
        return self.f1_max_error <= self.tol and self.f2_max_error <= self.tol


def _central_difference(fn, t, step):
    return (fn(t + step) - fn(t - step)) / (2.0 * step)


def check_loss(loss: LossFunction, grid: Sequence[float], step: float = FD_STEP) -> DerivativeCheckReport:
    """Compare f1 against central differences of f, and f2 against those of f1.

    Errors are measured as ``|analytic - fd| / max(1, |fd|)``.
    """
    t = np.asarray(list(grid), dtype=float)
    if t.size == 0:
        raise InvalidInputError("derivative check needs a non-empty grid")
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("derivative check grid contains non-finite values")

    def err(analytic, fd):
        return float(np.max(np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd))))

    e1 = err(loss.f1(t), _central_difference(loss.f, t, step))
    e2 = err(loss.f2(t), _central_difference(loss.f1, t, step))
    return DerivativeCheckReport(e1, e2)
