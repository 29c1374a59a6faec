"""Objective functions over (recall, precision).

Two families come with solver guarantees: the linear combination
``(1-alpha)*recall + alpha*precision`` (maximized) and the reciprocal
combination ``(1-alpha)/recall + alpha/precision`` (minimized).  Undefined
precision (nothing promoted) counts as precision zero, which makes such
policies lose under every objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams
from .model import Evaluation


class Objective:
    """Base: a score over (recall, precision) with an optimization sense."""

    sense: str = "max"  # "max" or "min"
    #: True when the objective weakly improves as precision rises at fixed
    #: recall; lets the grid oracle collapse dominated policies.
    monotone_precision: bool = True

    def value(self, recall: float, precision: float | None) -> float:
        raise NotImplementedError

    def value_arrays(self, recall: np.ndarray, precision: np.ndarray) -> np.ndarray:
        """Vectorized ``value``; undefined precision encoded as NaN."""
        raise NotImplementedError

    def of(self, ev: Evaluation) -> float:
        return self.value(ev.recall, ev.precision)

    def better(self, a: float, b: float) -> bool:
        """True when score ``a`` is strictly better than ``b``."""
        return a > b if self.sense == "max" else a < b

    @property
    def worst(self) -> float:
        return -math.inf if self.sense == "max" else math.inf

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


def _check_alpha(alpha: float) -> None:
    if not (0.0 <= alpha <= 1.0):
        raise InvalidParams(f"alpha must lie in [0, 1], got {alpha}")


@dataclass(frozen=True)
class LinearObjective(Objective):
    """Maximize (1-alpha)*recall + alpha*precision."""

    alpha: float
    sense = "max"

    def __post_init__(self):
        _check_alpha(self.alpha)

    def value(self, recall, precision):
        p = 0.0 if precision is None else precision
        return (1.0 - self.alpha) * recall + self.alpha * p

    def value_arrays(self, recall, precision):
        p = np.nan_to_num(precision, nan=0.0)
        return (1.0 - self.alpha) * recall + self.alpha * p

    def describe(self):
        return {"kind": "linear", "alpha": self.alpha}


@dataclass(frozen=True)
class ReciprocalObjective(Objective):
    """Minimize (1-alpha)/recall + alpha/precision."""

    alpha: float
    sense = "min"

    def __post_init__(self):
        _check_alpha(self.alpha)

    def value(self, recall, precision):
        rec_term = 0.0 if self.alpha == 1.0 else (
            (1.0 - self.alpha) / recall if recall > 0.0 else math.inf
        )
        if self.alpha == 0.0:
            return rec_term
        p = 0.0 if precision is None else precision
        return rec_term + (self.alpha / p if p > 0.0 else math.inf)

    def value_arrays(self, recall, precision):
        p = np.nan_to_num(precision, nan=0.0)
        with np.errstate(divide="ignore"):
            rec = np.where(recall > 0.0, (1.0 - self.alpha) / np.maximum(recall, 1e-300), np.inf)
            pre = np.where(p > 0.0, self.alpha / np.maximum(p, 1e-300), np.inf)
        if self.alpha == 0.0:
            return rec
        if self.alpha == 1.0:
            return pre
        return rec + pre

    def describe(self):
        return {"kind": "reciprocal", "alpha": self.alpha}


@dataclass(frozen=True)
class PrecisionObjective(Objective):
    """Maximize precision alone."""

    sense = "max"

    def value(self, recall, precision):
        return 0.0 if precision is None else precision

    def value_arrays(self, recall, precision):
        return np.nan_to_num(precision, nan=0.0)

    def describe(self):
        return {"kind": "precision"}


@dataclass(frozen=True)
class RecallObjective(Objective):
    """Maximize recall alone."""

    sense = "max"

    def value(self, recall, precision):
        return recall

    def value_arrays(self, recall, precision):
        return np.asarray(recall, dtype=float)

    def describe(self):
        return {"kind": "recall"}


@dataclass(frozen=True)
class CustomObjective(Objective):
    """Caller-supplied score ``fn(recall, precision)``; undefined precision is passed as 0.0."""

    fn: object
    sense: str = "max"
    label: str = "custom"
    monotone_precision: bool = False

    def value(self, recall, precision):
        return self.fn(recall, 0.0 if precision is None else precision)

    def value_arrays(self, recall, precision):
        p = np.nan_to_num(precision, nan=0.0)
        return self.fn(recall, p)

    def describe(self):
        return {"kind": "custom", "label": self.label, "sense": self.sense}
