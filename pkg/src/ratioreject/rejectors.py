"""Closed-form density-ratio rejectors.

Each rejector is the minimizer over rho >= 0 with E_P[rho] = 1 of

    E_P[rho(X) L'(X)] + lam * E_P[phi(rho(X))]

for a divergence generator phi.  Points are rejected where the ratio
rho(x) = dQ/dP(x) is at most tau.  Three families have usable closed forms:

* ``kl``    rho(x) = exp(-L'(x)/lam) / Z,  Z = E_P[exp(-L'/lam)]
* ``alpha`` rho(x) = [((a-1)/2) (b - L'(x)/lam)]_+ ** (2/(a-1)),  a > 1,
            with b found by bisection so that E_P[rho] = 1
* ``chi2``  rho(x) = 1 + (E_P[L'] - L'(x)) / lam  (a = 3 without clipping,
            valid when lam > max L' - E_P[L'])

Negating the risk turns the same solutions into worst-case (DRO) reweightings
of P; see :func:`dro_adversarial` and :func:`dro_dual_search`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from ._search import golden_max
from .divergences import DiscreteDistribution, divergence
from .errors import (
    ConfigError,
    DataError,
    PreconditionError,
    SolverError,
    UnsupportedDivergenceError,
)
from .losses import LossKind, PointwiseRisk

KINDS = ("kl", "alpha", "chi2")

KL_TOL = 1e-9
CHI2_TOL = 1e-12
BISECTION_TOL = 1e-8
MAX_BISECTION_ITER = 200
#: below this the clipped-power exponent 2/(a-1) exceeds 200
MIN_ALPHA = 1.01


@dataclass(frozen=True)
class RejectorSpec:
    """Divergence family and regularization weight ``lam`` of a rejector.

    An ``alpha`` spec with alpha == 1 is normalized to ``kl``.
    """

    kind: str = "kl"
    lam: float = 1.0
    alpha: float | None = None

    def __post_init__(self):
        kind = self.kind
        if kind not in KINDS:
            raise ConfigError(f"unknown rejector kind {kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"lambda must be positive and finite, got {self.lam!r}")
        alpha = self.alpha
        if kind == "kl":
            alpha = 1.0
        elif kind == "chi2":
            alpha = 3.0
        else:
            if alpha is None or not math.isfinite(alpha):
                raise ConfigError("alpha rejector needs a finite alpha")
            if alpha == 1.0:
                kind = "kl"
            elif alpha <= -1.0:
                raise UnsupportedDivergenceError(
                    f"alpha = {alpha} <= -1 has no closed-form normalizer; only alpha > 1 "
                    "(and the KL case alpha = 1) are supported"
                )
            elif alpha < 1.0:
                raise UnsupportedDivergenceError(
                    f"alpha = {alpha} in (-1, 1) has no closed-form rejector; use alpha > 1"
                )
            elif alpha < MIN_ALPHA:
                raise ConfigError(
                    f"alpha = {alpha} is too close to 1: exponent 2/(alpha-1) > 200; "
                    "use kind='kl' or alpha >= 1.01"
                )
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def from_alpha(cls, alpha: float, lam: float = 1.0) -> "RejectorSpec":
        return cls("alpha", lam, alpha)


@dataclass(frozen=True)
class DensityRatioRejector:
    """A fitted ratio rho(x) with its normalizer frozen at fit time.

    ``normalizer`` is Z for ``kl`` and b for ``alpha`` and ``chi2`` (for the
    latter b = 1 + E[L']/lam).  ``fit_distribution`` may be ``None`` for a
    rejector restored from disk.
    """

    spec: RejectorSpec
    normalizer: float
    fit_distribution: DiscreteDistribution | None = None
    log_normalizer: float | None = None
    mean_risk: float | None = None
    residual: float = 0.0
    iterations: int = 0

    def ratio(self, risk_values) -> np.ndarray:
        """Apply the fitted formula to risk values; no re-normalization."""
        v = np.ascontiguousarray(risk_values, dtype=float)
        scalar = v.ndim == 0
        v = np.atleast_1d(v)
        if not np.all(np.isfinite(v)):
            raise DataError("risk values must be finite")
        scaled = v / self.spec.lam
        kind = self.spec.kind
        if kind == "kl":
            out = _kernels.kl_ratio(scaled, self.log_normalizer)
        elif kind == "alpha":
            out = _kernels.alpha_ratio(scaled, self.normalizer, self.spec.alpha)
        else:
            out = np.maximum(1.0 + (self.mean_risk - v) / self.spec.lam, 0.0)
        return float(out[0]) if scalar else out

    def to_dict(self) -> dict:
        return {
            "kind": self.spec.kind,
            "lambda": self.spec.lam,
            "alpha": self.spec.alpha,
            "normalizer": self.normalizer,
            "log_normalizer": self.log_normalizer,
            "mean_risk": self.mean_risk,
            "residual": self.residual,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DensityRatioRejector":
        try:
            spec = RejectorSpec(d["kind"], d["lambda"], d.get("alpha"))
            return cls(
                spec,
                float(d["normalizer"]),
                None,
                d.get("log_normalizer"),
                d.get("mean_risk"),
                float(d.get("residual", 0.0)),
                int(d.get("iterations", 0)),
            )
        except KeyError as exc:
            raise DataError(f"rejector record is missing {exc.args[0]!r}") from None


@dataclass(frozen=True)
class RatioRejectionRule:
    rejector: DensityRatioRejector
    tau: float

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau!r}")

    def rejects(self, risk_values) -> np.ndarray:
        """Boolean mask, True where rho <= tau."""
        return np.atleast_1d(self.rejector.ratio(risk_values)) <= self.tau


@dataclass(frozen=True)
class DroConfig:
    epsilon: float
    lambda_range: tuple = (1e-3, 1e3)

    def __post_init__(self):
        lo, hi = self.lambda_range
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not (0 < lo < hi and math.isfinite(hi)):
            raise ConfigError("lambda_range must be an interval 0 < lo < hi < inf")


@dataclass(frozen=True)
class DroResult:
    lam: float
    adversarial: DiscreteDistribution
    dual_value: float
    divergence: float
    at_boundary: str | None  # "lower", "upper" or None


def _risk_values(p: DiscreteDistribution, risk) -> np.ndarray:
    if len(p) == 0:
        raise DataError("empty support")
    if isinstance(risk, PointwiseRisk):
        return np.ascontiguousarray(risk.aligned_to(p.support_ids), dtype=float)
    v = np.ascontiguousarray(risk, dtype=float)
    if v.shape != (len(p),):
        raise DataError(f"expected {len(p)} risk values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("risk values must be finite")
    return v


def _fit_kl(p, values, spec):
    weights = np.ascontiguousarray(p.weights)
    scaled = values / spec.lam
    log_z = _kernels.kl_log_partition(weights, scaled)
    rej = DensityRatioRejector(spec, math.exp(log_z), p, log_normalizer=log_z)
    residual = float(np.dot(weights, rej.ratio(values))) - 1.0
    if abs(residual) > KL_TOL:
        raise SolverError(f"KL normalization residual {residual:.3e} exceeds {KL_TOL}")
    return DensityRatioRejector(spec, rej.normalizer, p, log_normalizer=log_z, residual=residual)


def _fit_alpha(p, values, spec):
    weights = np.ascontiguousarray(p.weights)
    scaled = np.ascontiguousarray(values / spec.lam)
    b, res, lo, hi, it, ok = _kernels.solve_alpha_normalizer(
        weights, scaled, spec.alpha, MAX_BISECTION_ITER
    )
    if not ok:
        raise SolverError(f"could not bracket the normalizer: E[rho] < 1 on [{lo!r}, {hi!r}]")
    if not abs(res) <= BISECTION_TOL:
        raise SolverError(
            f"bisection stopped after {it} iterations with residual {res:.3e} "
            f"on bracket [{lo!r}, {hi!r}]"
        )
    return DensityRatioRejector(spec, b, p, residual=res, iterations=it)


def _chi2_min_lambda(p, values):
    return float(values.max() - p.expect(values))


def _fit_chi2(p, values, spec):
    mean = p.expect(values)
    min_lam = float(values.max() - mean)
    if not spec.lam > min_lam:
        raise PreconditionError(
            f"chi2 closed form needs lambda > max L' - E[L'] = {min_lam:.12g}, got {spec.lam!r}",
            min_lambda=min_lam,
        )
    rej = DensityRatioRejector(spec, 1.0 + mean / spec.lam, p, mean_risk=mean)
    residual = float(np.dot(p.weights, rej.ratio(values))) - 1.0
    if abs(residual) > CHI2_TOL:
        raise SolverError(f"chi2 normalization residual {residual:.3e} exceeds {CHI2_TOL}")
    return DensityRatioRejector(spec, rej.normalizer, p, mean_risk=mean, residual=residual)


_FITTERS = {"kl": _fit_kl, "alpha": _fit_alpha, "chi2": _fit_chi2}


def fit(p: DiscreteDistribution, risk, spec: RejectorSpec) -> DensityRatioRejector:
    """Fit the rejector described by ``spec`` on distribution ``p``."""
    return _FITTERS[spec.kind](p, _risk_values(p, risk), spec)


def fit_kl(p: DiscreteDistribution, risk, lam: float) -> DensityRatioRejector:
    return fit(p, risk, RejectorSpec("kl", lam))


def fit_alpha_pos(p: DiscreteDistribution, risk, alpha: float, lam: float) -> DensityRatioRejector:
    """Clipped power rejector for alpha > 1; alpha == 1 falls back to KL."""
    return fit(p, risk, RejectorSpec.from_alpha(alpha, lam))


def fit_chi_square(p: DiscreteDistribution, risk, lam: float) -> DensityRatioRejector:
    return fit(p, risk, RejectorSpec("chi2", lam))


def evaluate_ratio(rejector: DensityRatioRejector, risk_value: float) -> float:
    if not math.isfinite(risk_value):
        raise DataError("risk value must be finite")
    return rejector.ratio(float(risk_value))


def reject(rule: RatioRejectionRule, risk_value: float) -> bool:
    """True when the rule rejects a point with pointwise risk ``risk_value``."""
    return evaluate_ratio(rule.rejector, risk_value) <= rule.tau


def chow_oracle(posterior, cost: float, loss: LossKind | str = "zero_one"):
    """Bayes-optimal cost-based rejection from known class posteriors.

    Returns ``(rejected, labels)``: reject where the conditional Bayes risk is
    at least ``cost``; ``labels`` is the Bayes classifier.
    """
    if not 0.0 < cost < 0.5:
        raise ConfigError(f"rejection cost must lie in (0, 0.5), got {cost!r}")
    if isinstance(loss, str):
        loss = LossKind(loss)
    posterior = np.asarray(posterior, dtype=float)
    bayes_risk = loss.expected(posterior)
    return bayes_risk >= cost, np.argmax(posterior, axis=1)


def dro_adversarial(p: DiscreteDistribution, risk, spec: RejectorSpec) -> DiscreteDistribution:
    """Worst-case reweighting of ``p``: the idealized distribution for the negated risk."""
    values = _risk_values(p, risk)
    neg = -values
    if spec.kind == "chi2":
        min_lam = _chi2_min_lambda(p, neg)
        if not spec.lam > min_lam:
            raise PreconditionError(
                f"adversarial chi2 closed form needs lambda > E[L'] - min L' = {min_lam:.12g}",
                min_lambda=min_lam,
            )
    rej = _FITTERS[spec.kind](p, neg, spec)
    return DiscreteDistribution.from_weights(p.support_ids, p.weights * rej.ratio(neg))


def dro_dual_search(p: DiscreteDistribution, risk, alpha: float, config: DroConfig) -> DroResult:
    """Find the multiplier of the divergence-ball constraint D_alpha(P||Q) <= epsilon.

    Maximizes the concave dual  -E_{Q_lam}[L'] + lam (D_alpha(P || Q_lam) - epsilon)
    by golden-section search over log(lam); the maximizer has D = epsilon.
    A maximizer within tolerance of an end of ``config.lambda_range`` is
    flagged through ``at_boundary``; widen the range in that case.
    """
    values = _risk_values(p, risk)

    def adversary(lam):
        spec = RejectorSpec("kl", lam) if alpha == 1.0 else RejectorSpec.from_alpha(alpha, lam)
        q = dro_adversarial(p, values, spec)
        return q, divergence(alpha, p, q)

    def dual(log_lam):
        lam = math.exp(log_lam)
        q, div = adversary(lam)
        return -q.expect(values) + lam * (div - config.epsilon)

    lo, hi = (math.log(x) for x in config.lambda_range)
    xtol = 1e-5
    x, g = golden_max(dual, lo, hi, xtol)
    boundary = None
    if x - lo <= 2 * xtol:
        x, g, boundary = lo, dual(lo), "lower"
    elif hi - x <= 2 * xtol:
        x, g, boundary = hi, dual(hi), "upper"
    lam = math.exp(x)
    q, div = adversary(lam)
    return DroResult(lam, q, g, div, boundary)


def ratio_grid(n: int = 50) -> np.ndarray:
    """``n`` equidistant thresholds in (0, 1]."""
    return np.arange(1, n + 1) / n

