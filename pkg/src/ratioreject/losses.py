"""Pointwise losses and the pointwise risk L'(x) fed to the rejectors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

#: probability floor applied before logarithms; keeps log loss bounded
PROB_FLOOR = 1e-12
_PROB_SUM_TOL = 1e-9

LOSS_KINDS = ("zero_one", "log_loss", "brier")


@dataclass(frozen=True)
class LossKind:
    """A pointwise loss together with its upper bound B.

    ``brier`` uses half the squared distance to the one-hot label, which lies
    in [0, 1] for any number of classes and equals (h_1 - y)^2 when binary.
    """

    name: str
    floor: float = PROB_FLOOR

    def __post_init__(self):
        if self.name not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.name!r}; expected one of {LOSS_KINDS}")
        if not 0.0 < self.floor < 1.0:
            raise ConfigError("probability floor must lie in (0, 1)")

    @property
    def bound(self) -> float:
        if self.name == "log_loss":
            return -math.log(self.floor)
        return 1.0

    def realized(self, probs, labels) -> np.ndarray:
        """Loss of each prediction row against its observed label."""
        probs = np.asarray(probs, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        rows = np.arange(probs.shape[0])
        if self.name == "zero_one":
            return (np.argmax(probs, axis=1) != labels).astype(float)
        if self.name == "log_loss":
            return -np.log(np.maximum(probs[rows, labels], self.floor))
        sq = np.sum(probs * probs, axis=1) - 2.0 * probs[rows, labels] + 1.0
        return 0.5 * sq

    def expected(self, probs) -> np.ndarray:
        """E_{Y ~ h(x)} loss(Y, h(x)) for each row of ``probs``."""
        probs = np.asarray(probs, dtype=float)
        if self.name == "zero_one":
            out = 1.0 - probs.max(axis=1)
        elif self.name == "log_loss":
            out = -np.sum(probs * np.log(np.maximum(probs, self.floor)), axis=1)
        else:
            out = 0.5 * (1.0 - np.sum(probs * probs, axis=1))
        return np.clip(out, 0.0, self.bound)


@dataclass(frozen=True)
class PointwiseRisk:
    """L'(x) for a set of points, in loss units, with an upper bound."""

    ids: tuple
    values: np.ndarray = field(repr=False)
    bound: float

    def __post_init__(self):
        ids = tuple(self.ids)
        v = np.array(self.values, dtype=float).ravel()
        if len(ids) != v.shape[0]:
            raise DataError(f"{len(ids)} ids but {v.shape[0]} risk values")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DataError("risk values must be finite and non-negative")
        if v.size and v.max() > self.bound:
            raise DataError(f"risk value {v.max()!r} exceeds bound {self.bound!r}")
        v.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.ids)

    def as_dict(self) -> dict:
        return dict(zip(self.ids, self.values.tolist()))

    def aligned_to(self, ids: Sequence) -> np.ndarray:
        """Values re-ordered to ``ids``; every id must be present."""
        ids = tuple(ids)
        if ids == self.ids:
            return self.values
        index = {k: i for i, k in enumerate(self.ids)}
        try:
            return self.values[[index[k] for k in ids]]
        except KeyError as exc:
            raise DataError(f"no risk value for point {exc.args[0]!r}") from None


def validate_probs(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise DataError("expected a 2-D array of class probabilities with >= 2 classes")
    if not np.all(np.isfinite(probs)):
        row = int(np.argwhere(~np.isfinite(probs))[0, 0])
        raise DataError(f"non-finite probability in row {row}")
    if np.any(probs < 0):
        row = int(np.argwhere(probs < 0)[0, 0])
        raise DataError(f"negative probability in row {row}")
    bad = np.abs(probs.sum(axis=1) - 1.0) > _PROB_SUM_TOL
    if np.any(bad):
        raise DataError(f"probabilities in row {int(np.argmax(bad))} do not sum to 1")
    return probs


def pointwise_risk_plugin(probs, loss: LossKind | str, ids: Sequence | None = None) -> PointwiseRisk:
    """Plugin risk: the model's own predicted distribution stands in for P(Y | x)."""
    if isinstance(loss, str):
        loss = LossKind(loss)
    probs = validate_probs(probs)
    if ids is None:
        ids = range(probs.shape[0])
    return PointwiseRisk(tuple(ids), loss.expected(probs), loss.bound)


def pointwise_risk_direct(values: Mapping) -> PointwiseRisk:
    """Use externally supplied L'(x) values, e.g. conditional variances in regression."""
    ids = tuple(values)
    v = np.array([values[k] for k in ids], dtype=float)
    if not np.all(np.isfinite(v)):
        raise DataError("direct risk values must be finite")
    if np.any(v < 0):
        raise DataError("direct risk values must be non-negative")
    return PointwiseRisk(ids, v, float(v.max()) if v.size else 0.0)
