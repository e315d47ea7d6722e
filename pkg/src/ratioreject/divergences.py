"""Alpha-divergence generators and divergences between finite distributions.

The generator family is

    phi_a(z) = 4/(1-a^2) (1 - z^((1+a)/2)) + 2/(1-a) (z - 1)     a != +-1
    phi_a(z) = z log z - (z - 1)                                  a == 1
    phi_a(z) = -log z + (z - 1)                                   a == -1

and D_a(P || Q) = sum_x P(x) phi_a(Q(x) / P(x)).  The linear term integrates
to zero on normalized inputs; its sign is the one that makes phi_a(z) >= 0 and
keeps the family continuous in ``a`` at both a = 1 and a = -1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError, SupportMismatchError

#: |alpha - 1| below this routes to the KL branch.
ALPHA_ONE_GUARD = 1e-6
_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDistribution:
    """Weighted finite-support distribution over opaque point identifiers."""

    support_ids: tuple
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = tuple(self.support_ids)
        w = np.array(self.weights, dtype=float).ravel()
        if len(ids) != w.shape[0]:
            raise DataError(f"{len(ids)} ids but {w.shape[0]} weights")
        if len(ids) == 0:
            raise DataError("empty support")
        if len(set(ids)) != len(ids):
            raise DataError("support ids must be unique")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DataError("weights must be finite and non-negative")
        total = math.fsum(w)
        if abs(total - 1.0) > _SUM_TOL:
            raise DataError(f"weights sum to {total!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "support_ids", ids)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.support_ids)

    @classmethod
    def uniform(cls, ids: Sequence) -> "DiscreteDistribution":
        n = len(ids)
        return cls(tuple(ids), np.full(n, 1.0 / n))

    @classmethod
    def from_weights(cls, ids: Sequence, weights) -> "DiscreteDistribution":
        """Normalize arbitrary non-negative weights."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise DataError("weights must have positive total mass")
        w = w / total
        # absorb the last rounding error so the fsum check passes
        w[np.argmax(w)] += 1.0 - math.fsum(w)
        return cls(tuple(ids), w)

    def expect(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def as_dict(self) -> dict:
        return dict(zip(self.support_ids, self.weights.tolist()))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise DomainError(f"alpha must be finite, got {alpha!r}")
    return alpha


def phi_alpha(alpha: float, z):
    """Alpha-divergence generator; accepts scalars or arrays."""
    alpha = _check_alpha(alpha)
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("phi_alpha needs z >= 0")
    if abs(alpha - 1.0) < ALPHA_ONE_GUARD:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(arr > 0, arr * np.log(np.where(arr > 0, arr, 1.0)), 0.0) - (arr - 1.0)
    elif alpha == -1.0:
        if np.any(arr == 0):
            raise DomainError("phi_alpha with alpha = -1 needs z > 0")
        out = -np.log(arr) + (arr - 1.0)
    else:
        expo = 0.5 * (1.0 + alpha)
        with np.errstate(divide="ignore"):
            powered = np.power(arr, expo)
        out = 4.0 / (1.0 - alpha * alpha) * (1.0 - powered) + 2.0 / (1.0 - alpha) * (arr - 1.0)
    return float(out) if out.ndim == 0 else out


def psi_alpha(alpha: float, z):
    """z ** ((1 - alpha) / 2), or log z at alpha = 1."""
    alpha = _check_alpha(alpha)
    arr = np.asarray(z, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("psi_alpha needs z > 0")
    out = np.log(arr) if alpha == 1.0 else np.power(arr, 0.5 * (1.0 - alpha))
    return float(out) if out.ndim == 0 else out


def psi_alpha_inv(alpha: float, y):
    """Inverse of :func:`psi_alpha`: y ** (2 / (1 - alpha)), or exp y at alpha = 1."""
    alpha = _check_alpha(alpha)
    arr = np.asarray(y, dtype=float)
    if alpha == 1.0:
        if np.any(np.isnan(arr)):
            raise DomainError("psi_alpha_inv needs a real argument")
        out = np.exp(arr)
    else:
        if np.any(~(arr > 0)):
            raise DomainError("psi_alpha_inv needs y > 0 when alpha != 1")
        out = np.power(arr, 2.0 / (1.0 - alpha))
    return float(out) if out.ndim == 0 else out


def _aligned(p: DiscreteDistribution, q: DiscreteDistribution):
    if p.support_ids == q.support_ids:
        return p.weights, q.weights
    if set(p.support_ids) != set(q.support_ids):
        raise SupportMismatchError("distributions are defined on different support ids")
    index = {k: i for i, k in enumerate(q.support_ids)}
    return p.weights, q.weights[[index[k] for k in p.support_ids]]


def divergence(alpha: float, p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """D_alpha(p || q) = sum p * phi_alpha(q / p); +inf when q is not dominated by p."""
    alpha = _check_alpha(alpha)
    pw, qw = _aligned(p, q)
    if np.any((pw == 0) & (qw > 0)):
        return math.inf
    live = pw > 0
    pw, qw = pw[live], qw[live]
    ratio = qw / pw
    if np.any(ratio == 0) and alpha <= -1.0 and abs(alpha - 1.0) >= ALPHA_ONE_GUARD:
        return math.inf
    total = math.fsum(pw * phi_alpha(alpha, ratio))
    # rounding can leave a tiny negative residue for q == p
    return max(total, 0.0)
