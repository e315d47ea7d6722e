"""Temperature scaling of logits, fitted by held-out negative log-likelihood."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from ._search import golden_max
from .errors import DataError

T_MIN, T_MAX = 0.05, 20.0
GRID_POINTS = 64
T_XTOL = 1e-4


@dataclass(frozen=True)
class CalibrationModel:
    temperature: float
    final_nll: float
    nll_at_one: float | None = None
    at_boundary: str | None = None  # "lower" / "upper" when the optimum hit the search box


def _check_logits(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] < 2:
        raise DataError("logits must be a 2-D array with at least 2 classes")
    if not np.all(np.isfinite(z)):
        raise DataError(f"non-finite logit in row {int(np.argwhere(~np.isfinite(z))[0, 0])}")
    return z


def mean_nll(logits, labels, temperature: float) -> float:
    z = np.asarray(logits, dtype=float) / temperature
    rows = np.arange(z.shape[0])
    return float(-np.mean(log_softmax(z, axis=1)[rows, labels]))


def fit_temperature(logits, labels) -> CalibrationModel:
    """Fit T minimizing the mean NLL of softmax(logits / T).

    A 64-point log-spaced grid on [0.05, 20] locates the minimum, which
    golden-section search then refines to |dT| <= 1e-4.  An optimum on the edge
    of the grid is reported through ``at_boundary``.
    """
    z = _check_logits(logits)
    y = np.asarray(labels)
    if y.shape != (z.shape[0],):
        raise DataError(f"{z.shape[0]} logit rows but {y.shape} labels")
    if not np.issubdtype(y.dtype, np.integer):
        raise DataError("labels must be integer class indices")
    if y.min() < 0 or y.max() >= z.shape[1]:
        raise DataError("label outside the range of logit columns")
    if np.unique(y).size < 2:
        raise DataError("calibration refused: labels contain a single class")

    grid = np.geomspace(T_MIN, T_MAX, GRID_POINTS)
    values = np.array([mean_nll(z, y, t) for t in grid])
    best = np.flatnonzero(values == values.min())
    i = int(best[np.argmin(np.abs(np.log(grid[best])))])

    boundary = None
    if i == 0 or i == GRID_POINTS - 1:
        t, nll = float(grid[i]), float(values[i])
        boundary = "lower" if i == 0 else "upper"
    else:
        t, neg = golden_max(lambda s: -mean_nll(z, y, s), grid[i - 1], grid[i + 1], T_XTOL)
        nll = -neg

    nll_one = mean_nll(z, y, 1.0)
    if nll_one <= nll:
        t, nll, boundary = 1.0, nll_one, None
    return CalibrationModel(float(t), float(nll), nll_one, boundary)


def apply_temperature(model: CalibrationModel | float, logits) -> np.ndarray:
    """softmax(logits / T); accepts one vector or a matrix of rows."""
    t = model.temperature if isinstance(model, CalibrationModel) else float(model)
    z = np.asarray(logits, dtype=float)
    return softmax(z / t, axis=-1)
