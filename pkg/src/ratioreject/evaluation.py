"""Threshold sweeps, coverage targeting, synthetic tasks and bound checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .divergences import DiscreteDistribution
from .errors import ConfigError, DataError, PreconditionError, SolverError
from .losses import LossKind, PointwiseRisk, pointwise_risk_plugin
from .rejectors import DensityRatioRejector, fit_chi_square, fit_kl, ratio_grid

DEFAULT_TAUS = ratio_grid(50)


@dataclass(frozen=True)
class SweepRow:
    tau: float
    coverage: float
    accuracy: float | None  # None when nothing is accepted or labels are absent
    selective_risk: float | None
    n_accepted: int


def sweep(
    rejector: DensityRatioRejector,
    risk,
    labels=None,
    predictions=None,
    taus=None,
    point_losses=None,
) -> list[SweepRow]:
    """Coverage, accuracy and selective risk of the tau-rule for each threshold.

    ``point_losses`` are the per-point losses averaged into the selective
    risk.  Without them the zero-one loss is used when labels are given and
    the plugin risk otherwise.
    """
    values = risk.values if isinstance(risk, PointwiseRisk) else np.asarray(risk, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise DataError("empty evaluation set")
    taus = DEFAULT_TAUS if taus is None else np.asarray(taus, dtype=float)
    has_labels = labels is not None and predictions is not None
    if has_labels:
        labels = np.asarray(labels)
        predictions = np.asarray(predictions)
        if labels.shape != (n,) or predictions.shape != (n,):
            raise DataError("labels and predictions must align with the risk values")
        correct = (labels == predictions).astype(float)
    else:
        correct = np.zeros(n)
    if point_losses is None:
        point_losses = 1.0 - correct if has_labels else values
    point_losses = np.ascontiguousarray(point_losses, dtype=float)

    rho = np.ascontiguousarray(rejector.ratio(values))
    n_acc, n_correct, loss_sum = _kernels.sweep_counts(
        rho, np.ascontiguousarray(correct), point_losses, np.ascontiguousarray(taus)
    )
    rows = []
    for t, k, c, l in zip(taus.tolist(), n_acc.tolist(), n_correct.tolist(), loss_sum.tolist()):
        acc = c / k if (k > 0 and has_labels) else None
        rows.append(SweepRow(t, k / n, acc, l / k if k > 0 else None, k))
    rows.sort(key=lambda r: (-r.coverage, r.tau))
    return rows


@dataclass(frozen=True)
class CoverageSelection:
    tau: float
    coverage: float
    target: float


def select_tau_for_coverage(rows: list[SweepRow], target: float) -> CoverageSelection:
    """Largest threshold whose coverage on the calibration sweep is at least ``target``."""
    if not 0.0 < target <= 1.0:
        raise ConfigError(f"target coverage must lie in (0, 1], got {target!r}")
    ok = [r for r in rows if r.coverage >= target]
    if not ok:
        best = max(r.coverage for r in rows)
        raise SolverError(f"no threshold reaches coverage {target}; best is {best}")
    row = max(ok, key=lambda r: r.tau)
    return CoverageSelection(row.tau, row.coverage, target)


@dataclass(frozen=True)
class SyntheticTask:
    """Finite-support task with known class posteriors."""

    marginal: DiscreteDistribution
    posterior: np.ndarray = field(repr=False)
    label_noise_rate: float = 0.0

    def __post_init__(self):
        post = np.asarray(self.posterior, dtype=float)
        if post.ndim != 2 or post.shape[0] != len(self.marginal) or post.shape[1] < 2:
            raise ConfigError("posterior must have one row per support point and >= 2 classes")
        if np.any(post < 0) or np.any(np.abs(post.sum(axis=1) - 1.0) > 1e-12):
            raise ConfigError("posterior rows must be probability vectors")
        if not 0.0 <= self.label_noise_rate < 0.5:
            raise ConfigError("label noise rate must lie in [0, 0.5)")
        object.__setattr__(self, "posterior", post)

    @property
    def size(self) -> int:
        return len(self.marginal)

    @property
    def n_classes(self) -> int:
        return self.posterior.shape[1]

    def risk(self, loss: LossKind | str = "zero_one") -> PointwiseRisk:
        """Pointwise Bayes risk with the true posterior used as the model."""
        return pointwise_risk_plugin(self.posterior, loss, self.marginal.support_ids)

    @classmethod
    def random(cls, support: int, classes: int = 2, seed=0, noise: float = 0.0,
               max_scale: float = 6.0, uniform_marginal: bool = False) -> "SyntheticTask":
        """Random task: per-point logits with a random sharpness in [0, max_scale]."""
        rng = np.random.default_rng(seed)
        scale = rng.uniform(0.0, max_scale, size=(support, 1))
        logits = scale * rng.standard_normal((support, classes))
        post = np.exp(logits - logits.max(axis=1, keepdims=True))
        post /= post.sum(axis=1, keepdims=True)
        ids = [f"x{i}" for i in range(support)]
        if uniform_marginal:
            marginal = DiscreteDistribution.uniform(ids)
        else:
            marginal = DiscreteDistribution.from_weights(ids, rng.uniform(0.5, 1.5, support))
        return cls(marginal, post, noise)


@dataclass(frozen=True)
class SyntheticSample:
    points: np.ndarray  # index into the task support
    labels: np.ndarray  # observed, possibly flipped
    clean_labels: np.ndarray


def generate_synthetic(task: SyntheticTask, n: int, seed=0, noise: float | None = None) -> SyntheticSample:
    """i.i.d. draws from marginal x posterior, then symmetric label flips.

    A flipped label moves to one of the other classes uniformly at random.
    """
    if n < 1:
        raise ConfigError("sample size must be at least 1")
    rate = task.label_noise_rate if noise is None else noise
    if not 0.0 <= rate < 0.5:
        raise ConfigError("label noise rate must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    k = task.n_classes
    points = rng.choice(task.size, size=n, p=task.marginal.weights)
    cdf = np.cumsum(task.posterior[points], axis=1)
    u = rng.random(n)[:, None]
    clean = np.minimum((u > cdf).sum(axis=1), k - 1)
    flip = rng.random(n) < rate
    shift = rng.integers(1, k, size=n)
    labels = np.where(flip, (clean + shift) % k, clean)
    return SyntheticSample(points, labels.astype(np.int64), clean.astype(np.int64))


def empirical_distribution(task: SyntheticTask, points) -> DiscreteDistribution:
    """Empirical distribution of sampled support indices, on the full task support."""
    counts = np.bincount(np.asarray(points), minlength=task.size)
    return DiscreteDistribution(task.marginal.support_ids, counts / counts.sum())


def tv_distance(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Half the L1 distance; ids missing from one side count as zero mass."""
    a, b = p.as_dict(), q.as_dict()
    return 0.5 * math.fsum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in a.keys() | b.keys())


@dataclass(frozen=True)
class BoundCheckReport:
    theorem: str
    N: int
    M: int
    delta: float
    lam: float
    B: float
    trials: int
    bound_value: float
    empirical_sup_error: float  # (1 - delta) quantile over trials
    max_sup_error: float
    violation_rate: float
    allowed_rate: float
    violated: bool
    rate_base: int | None = None
    median_error_base: float | None = None
    median_error_100x: float | None = None
    rate_ratio: float | None = None


def kl_bound_constant(B: float, lam: float) -> float:
    return math.exp(B / lam) ** 3 * math.sinh(B / lam)


def kl_bound(N: int, M: int, delta: float, B: float, lam: float) -> float:
    return kl_bound_constant(B, lam) * math.sqrt(2.0 / N * math.log(2.0 * M / delta))


def chi2_bound(N: int, M: int, delta: float, B: float, lam: float) -> float:
    return B / lam * math.sqrt(2.0 / N * math.log(2.0 * M / delta))


def _sup_errors(task, values, test_idx, fitter, lam, N, seeds):
    exact = fitter(task.marginal, values, lam).ratio(values[test_idx])
    out = np.empty(len(seeds))
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        counts = rng.multinomial(N, task.marginal.weights)
        p_hat = DiscreteDistribution(task.marginal.support_ids, counts / N)
        est = fitter(p_hat, values, lam).ratio(values[test_idx])
        out[i] = np.max(np.abs(exact - est))
    return out


def _check_bound(theorem, fitter, bound_fn, task, N, M, delta, lam, trials, seed, loss, B,
                 rate_base, rate_trials):
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must lie in (0, 1)")
    if not 1 <= M <= task.size:
        raise ConfigError(f"test-set size M must lie in [1, {task.size}]")
    if N < 1 or trials < 1:
        raise ConfigError("N and trials must be positive")
    loss = LossKind(loss) if isinstance(loss, str) else loss
    B = loss.bound if B is None else float(B)
    values = np.ascontiguousarray(task.risk(loss).values)
    if values.max() > B:
        raise ConfigError(f"loss bound B = {B} is below the largest risk value")
    test_idx = np.arange(M)

    main, low, high = np.random.SeedSequence(seed).spawn(3)
    errors = _sup_errors(task, values, test_idx, fitter, lam, N, main.spawn(trials))
    bound = bound_fn(N, M, delta, B, lam)
    rate = float(np.mean(errors > bound))
    allowed = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)

    rate_fields = {}
    if rate_base:
        e_lo = _sup_errors(task, values, test_idx, fitter, lam, rate_base, low.spawn(rate_trials))
        e_hi = _sup_errors(task, values, test_idx, fitter, lam, 100 * rate_base, high.spawn(rate_trials))
        m_lo, m_hi = float(np.median(e_lo)), float(np.median(e_hi))
        rate_fields = dict(
            rate_base=rate_base,
            median_error_base=m_lo,
            median_error_100x=m_hi,
            rate_ratio=m_lo / m_hi if m_hi > 0 else (math.nan if m_lo == 0 else math.inf),
        )
    return BoundCheckReport(
        theorem, N, M, delta, lam, B, trials, bound,
        float(np.quantile(errors, 1.0 - delta)), float(errors.max()),
        rate, allowed, rate > allowed, **rate_fields,
    )


def check_kl_bound(task: SyntheticTask, N: int, M: int, delta: float, lam: float, trials: int,
                   seed=0, loss="zero_one", B=None, rate_base=1000, rate_trials=200) -> BoundCheckReport:
    """Monte-Carlo check of the KL ratio generalization bound.

    Each trial draws N points from the task marginal, refits the KL rejector
    on the empirical distribution, and records sup over the first M support
    points of |rho - rho_hat|.  The bound is
    exp(B/lam)^3 sinh(B/lam) sqrt(2/N log(2M/delta)).
    """
    return _check_bound("kl", fit_kl, kl_bound, task, N, M, delta, lam, trials, seed, loss, B,
                        rate_base, rate_trials)


def check_chi2_bound(task: SyntheticTask, N: int, M: int, delta: float, lam: float, trials: int,
                     seed=0, loss="zero_one", B=None, rate_base=1000, rate_trials=200) -> BoundCheckReport:
    """As :func:`check_kl_bound` for the chi-square ratio; requires lam > 2B."""
    b = (LossKind(loss) if isinstance(loss, str) else loss).bound if B is None else float(B)
    if not lam > 2.0 * b:
        raise PreconditionError(f"chi2 bound needs lambda > 2B = {2.0 * b}", min_lambda=2.0 * b)
    return _check_bound("chi2", fit_chi_square, chi2_bound, task, N, M, delta, lam, trials, seed,
                        loss, B, rate_base, rate_trials)


def tv_convergence(task: SyntheticTask, lam: float, n_small: int, n_large: int, trials: int,
                   seed=0, loss="zero_one") -> np.ndarray:
    """TV(Q_hat, Q) at ``n_small`` and ``n_large`` samples for each trial.

    Q = P * rho is the exact KL idealized distribution and Q_hat = P_hat * rho_hat
    its plug-in estimate.  Returns an array of shape (trials, 2).
    """
    values = np.ascontiguousarray(task.risk(loss).values)
    exact = fit_kl(task.marginal, values, lam)
    q = DiscreteDistribution.from_weights(
        task.marginal.support_ids, task.marginal.weights * exact.ratio(values)
    )
    out = np.empty((trials, 2))
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(ss)
        for j, n in enumerate((n_small, n_large)):
            counts = rng.multinomial(n, task.marginal.weights)
            p_hat = DiscreteDistribution(task.marginal.support_ids, counts / n)
            est = fit_kl(p_hat, values, lam)
            q_hat = DiscreteDistribution.from_weights(
                task.marginal.support_ids, p_hat.weights * est.ratio(values)
            )
            out[i, j] = tv_distance(q_hat, q)
    return out
