import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratioreject.divergences import DiscreteDistribution, divergence
from ratioreject.errors import (
    ConfigError,
    DataError,
    PreconditionError,
    UnsupportedDivergenceError,
)
from ratioreject.losses import PointwiseRisk
from ratioreject.rejectors import (
    DroConfig,
    RatioRejectionRule,
    RejectorSpec,
    chow_oracle,
    dro_adversarial,
    dro_dual_search,
    evaluate_ratio,
    fit,
    fit_alpha_pos,
    fit_chi_square,
    fit_kl,
    reject,
)

AB = DiscreteDistribution.uniform(["a", "b"])
LOG2 = math.log(2)


def random_instance(rng, n=None):
    n = n or int(rng.integers(2, 201))
    ids = [f"p{i}" for i in range(n)]
    p = DiscreteDistribution.from_weights(ids, rng.uniform(0.01, 1.0, n))
    return p, rng.uniform(0.0, 1.0, n)


# KL ---------------------------------------------------------------------------

def test_kl_two_point_example():
    rej = fit_kl(AB, [0.0, LOG2], 1.0)
    assert rej.normalizer == pytest.approx(0.75, abs=1e-15)
    np.testing.assert_allclose(rej.ratio(np.array([0.0, LOG2])), [4 / 3, 2 / 3], atol=1e-15)
    assert evaluate_ratio(rej, LOG2) == pytest.approx(2 / 3, abs=1e-15)


@pytest.mark.parametrize("lam", [0.01, 1.0, 50.0])
def test_kl_constant_risk_is_uniform_ratio(lam):
    p = DiscreteDistribution.uniform(list("abcde"))
    rej = fit_kl(p, np.full(5, 0.37), lam)
    np.testing.assert_allclose(rej.ratio(np.full(5, 0.37)), 1.0, atol=1e-15)


def test_kl_large_lambda_near_uniform(rng):
    p, risk = random_instance(rng, 50)
    rej = fit_kl(p, risk, 1e6)
    assert np.max(np.abs(rej.ratio(risk) - 1.0)) <= 1e-3


def test_kl_no_overflow_for_large_scaled_risk():
    rej = fit_kl(AB, [0.0, 5000.0], 1.0)
    r = rej.ratio(np.array([0.0, 5000.0]))
    assert np.all(np.isfinite(r)) and r[0] == pytest.approx(2.0)


def test_kl_accepts_pointwise_risk_by_id():
    p = DiscreteDistribution(("a", "b"), [0.5, 0.5])
    risk = PointwiseRisk(("b", "a"), [LOG2, 0.0], 1.0)
    assert fit_kl(p, risk, 1.0).normalizer == pytest.approx(0.75)
    with pytest.raises(DataError):
        fit_kl(p, PointwiseRisk(("a",), [0.0], 1.0), 1.0)


def test_kl_tilt_invariance(rng):
    p, risk = random_instance(rng, 40)
    a = fit_kl(p, risk, 0.7)
    b = fit_kl(p, risk + 3.0, 0.7)
    np.testing.assert_allclose(a.ratio(risk), b.ratio(risk + 3.0), rtol=0, atol=1e-12)


# alpha > 1 -------------------------------------------------------------------

def test_alpha_clipping_example():
    rej = fit_alpha_pos(AB, [0.0, 10.0], 3.0, 1.0)
    assert rej.normalizer == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(rej.ratio(np.array([0.0, 10.0])), [2.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0, 5.0])
def test_alpha_constant_risk(alpha):
    p = DiscreteDistribution.uniform(list("abc"))
    rej = fit_alpha_pos(p, np.full(3, 0.4), alpha, 2.0)
    assert rej.normalizer == pytest.approx(2 / (alpha - 1) + 0.4 / 2.0, abs=1e-9)
    np.testing.assert_allclose(rej.ratio(np.full(3, 0.4)), 1.0, atol=1e-8)


def test_alpha_evaluate_clip_branch():
    rej = fit_alpha_pos(AB, [0.0, 10.0], 3.0, 1.0)
    assert evaluate_ratio(rej, 3.0) == 0.0


def test_alpha_one_routes_to_kl():
    rej = fit_alpha_pos(AB, [0.0, LOG2], 1.0, 1.0)
    assert rej.spec.kind == "kl"
    assert rej.normalizer == pytest.approx(0.75)


@pytest.mark.parametrize("alpha", [-1.0, -3.0])
def test_alpha_below_minus_one_unsupported(alpha):
    with pytest.raises(UnsupportedDivergenceError):
        RejectorSpec.from_alpha(alpha)


def test_alpha_too_close_to_one():
    with pytest.raises(ConfigError):
        RejectorSpec.from_alpha(1.005)
    with pytest.raises(UnsupportedDivergenceError):
        RejectorSpec.from_alpha(0.5)


def test_alpha_clipping_consistency(rng):
    for _ in range(50):
        p, risk = random_instance(rng)
        alpha = float(rng.choice([1.5, 2.0, 3.0, 5.0]))
        lam = float(rng.uniform(0.05, 0.5))
        rej = fit_alpha_pos(p, risk, alpha, lam)
        rho = rej.ratio(risk)
        dead = rej.normalizer - risk / lam <= 0
        assert np.all(rho[dead] == 0.0)
        assert np.all(rho[~dead] > 0.0)


# chi-square ------------------------------------------------------------------

def test_chi2_example():
    rej = fit_chi_square(AB, [0.0, 1.0], 2.0)
    np.testing.assert_allclose(rej.ratio(np.array([0.0, 1.0])), [1.25, 0.75], atol=1e-15)
    assert evaluate_ratio(rej, 0.5) == 1.0
    assert rej.normalizer == pytest.approx(1.25)


def test_chi2_constant_risk():
    rej = fit_chi_square(AB, [0.3, 0.3], 0.1)
    np.testing.assert_array_equal(rej.ratio(np.array([0.3, 0.3])), [1.0, 1.0])


def test_chi2_just_above_precondition():
    rej = fit_chi_square(AB, [0.0, 1.0], 0.5 + 1e-6)
    rho = rej.ratio(np.array([0.0, 1.0]))
    assert 0 < rho[1] < 1e-5
    assert rho.mean() == pytest.approx(1.0, abs=1e-12)


def test_chi2_precondition_error_names_min_lambda():
    with pytest.raises(PreconditionError) as info:
        fit_chi_square(AB, [0.0, 1.0], 0.5)
    assert info.value.min_lambda == pytest.approx(0.5)
    assert info.value.exit_code == 4


def test_chi2_matches_bisection(rng):
    for _ in range(100):
        p, risk = random_instance(rng)
        lam = (risk.max() - p.expect(risk)) * float(rng.uniform(1.01, 5.0))
        closed = fit_chi_square(p, risk, lam).ratio(risk)
        bis = fit_alpha_pos(p, risk, 3.0, lam).ratio(risk)
        assert np.max(np.abs(closed - bis)) <= 1e-6


def test_chi2_large_lambda_limit(rng):
    p, risk = random_instance(rng, 30)
    for lam in (10.0, 100.0, 1e4):
        rho = fit_chi_square(p, risk, lam).ratio(risk)
        assert np.max(np.abs(rho - 1)) <= 2 * 1.0 / lam


# shared properties -------------------------------------------------------------

specs = st.one_of(
    st.builds(lambda lam: RejectorSpec("kl", lam), st.floats(0.2, 10.0)),
    st.builds(RejectorSpec.from_alpha, st.sampled_from([1.5, 2.0, 3.0, 5.0]), st.floats(0.2, 10.0)),
)


@settings(max_examples=150, deadline=None)
@given(spec=specs, seed=st.integers(0, 2**32 - 1))
def test_normalization_and_monotonicity(spec, seed):
    rng = np.random.default_rng(seed)
    p, risk = random_instance(rng)
    rej = fit(p, risk, spec)
    rho = rej.ratio(risk)
    tol = 1e-9 if spec.kind == "kl" else 1e-8
    assert abs(math.fsum(p.weights * rho) - 1.0) <= tol
    assert np.all(rho >= 0)
    order = np.argsort(risk)
    assert np.all(np.diff(rho[order]) <= 1e-15)


# rejection rule ------------------------------------------------------------------

def test_reject_is_non_strict():
    rej = fit_kl(AB, [0.0, LOG2], 1.0)
    # rho(log 2) = 2/3
    assert reject(RatioRejectionRule(rej, 2 / 3), LOG2)
    assert not reject(RatioRejectionRule(rej, 0.5), LOG2)
    alpha = fit_alpha_pos(AB, [0.0, 1.0], 3.0, 1.0)  # rho = (1.5, 0.5)
    assert reject(RatioRejectionRule(alpha, 0.5), 1.0)
    assert not reject(RatioRejectionRule(alpha, 1.0), 0.0)


def test_constant_ratio_rejects_everything_at_tau_one():
    rej = fit_kl(AB, [0.2, 0.2], 1.0)
    rule = RatioRejectionRule(rej, 1.0)
    assert np.all(rule.rejects([0.2, 0.2]))


@pytest.mark.parametrize("tau", [0.0, -0.1, 1.01])
def test_tau_range(tau):
    with pytest.raises(ConfigError):
        RatioRejectionRule(fit_kl(AB, [0.0, 1.0], 1.0), tau)


# Chow oracle ---------------------------------------------------------------------

def test_chow_examples():
    rej, labels = chow_oracle([[0.5, 0.5], [0.0, 1.0]], 0.3)
    assert rej.tolist() == [True, False]
    assert labels[1] == 1
    with pytest.raises(ConfigError):
        chow_oracle([[0.5, 0.5]], 0.5)


def brute_force_rejector(p_w, posterior, cost):
    """Minimize E[(1 - r) loss] + c P[r = 1] over all binary r, enumerating labels."""
    m, k = posterior.shape
    h = np.argmax(posterior, axis=1)
    # expected zero-one loss of h under Y ~ posterior, by label enumeration
    cond = np.array([sum(posterior[i, y] * (y != h[i]) for y in range(k)) for i in range(m)])
    best, best_r = math.inf, None
    for r in itertools.product((0, 1), repeat=m):
        r = np.array(r)
        obj = float(np.sum(p_w * ((1 - r) * cond + cost * r)))
        if obj < best - 1e-15:
            best, best_r = obj, r
    return best_r.astype(bool)


def test_chow_matches_brute_force_three_points():
    posterior = np.array([[0.9, 0.1], [0.6, 0.4], [0.75, 0.25]])
    p_w = np.array([0.2, 0.5, 0.3])
    rej, _ = chow_oracle(posterior, 0.2)
    assert rej.tolist() == brute_force_rejector(p_w, posterior, 0.2).tolist()


def test_chow_margin_form(rng):
    eta = rng.uniform(0, 1, 500)
    for c in (0.05, 0.2, 0.45):
        rej, _ = chow_oracle(np.c_[1 - eta, eta], c)
        np.testing.assert_array_equal(rej, np.abs(2 * eta - 1) <= 1 - 2 * c)


def test_kl_rule_equivalent_to_chow_small(rng):
    eta = rng.uniform(0, 1, 30)
    post = np.c_[1 - eta, eta]
    risk = np.minimum(eta, 1 - eta)
    p = DiscreteDistribution.uniform([str(i) for i in range(30)])
    for lam in (0.5, 1.0, 2.0):
        rho = fit_kl(p, risk, lam).ratio(risk)
        for c in (0.05, 0.25, 0.45):
            target, _ = chow_oracle(post, c)
            # any tau between the ratios of the boundary points works; use the midpoint
            lo = rho[target].max()
            hi = rho[~target].min() if (~target).any() else np.inf
            tau = lo if not np.isfinite(hi) else 0.5 * (lo + hi)
            np.testing.assert_array_equal(rho <= tau, target)


# DRO -------------------------------------------------------------------------------

def test_dro_two_point_example():
    q = dro_adversarial(AB, [0.0, LOG2], RejectorSpec("kl", 1.0))
    np.testing.assert_allclose(q.weights, [1 / 3, 2 / 3], atol=1e-12)


def test_dro_constant_risk_returns_p(rng):
    p, _ = random_instance(rng, 10)
    for spec in (RejectorSpec("kl", 1.0), RejectorSpec.from_alpha(3.0, 1.0), RejectorSpec("chi2", 1.0)):
        q = dro_adversarial(p, np.full(10, 0.3), spec)
        np.testing.assert_allclose(q.weights, p.weights, atol=1e-12)


def test_dro_divergence_decreases_with_lambda(rng):
    p, risk = random_instance(rng, 25)
    for alpha, kind in ((1.0, RejectorSpec("kl", 1.0)), (3.0, RejectorSpec.from_alpha(3.0, 1.0))):
        divs = []
        for lam in (1.0, 10.0, 100.0):
            spec = RejectorSpec(kind.kind, lam, kind.alpha)
            q = dro_adversarial(p, risk, spec)
            assert abs(math.fsum(q.weights) - 1) <= 1e-9
            divs.append(divergence(alpha, p, q))
        assert all(math.isfinite(d) for d in divs)
        assert divs[0] > divs[1] > divs[2]


def test_dro_moves_mass_to_high_loss(rng):
    p, risk = random_instance(rng, 20)
    q = dro_adversarial(p, risk, RejectorSpec("kl", 0.5))
    assert q.expect(risk) > p.expect(risk)


@pytest.mark.parametrize("alpha", [1.0, 3.0])
def test_dro_dual_round_trip(rng, alpha):
    p, risk = random_instance(rng, 30)
    lam0 = 0.8
    spec = RejectorSpec("kl", lam0) if alpha == 1.0 else RejectorSpec.from_alpha(alpha, lam0)
    eps = divergence(alpha, p, dro_adversarial(p, risk, spec))
    res = dro_dual_search(p, risk, alpha, DroConfig(eps, (1e-2, 1e2)))
    assert res.at_boundary is None
    assert res.lam == pytest.approx(lam0, rel=1e-3)
    assert res.divergence == pytest.approx(eps, rel=1e-3)


def test_dro_dual_boundary_cases(rng):
    p, risk = random_instance(rng, 10)
    res = dro_dual_search(p, risk, 1.0, DroConfig(100.0, (1e-2, 1e2)))
    assert res.at_boundary == "lower"
    res = dro_dual_search(p, np.full(10, 0.4), 1.0, DroConfig(0.1))
    assert res.at_boundary == "lower"
    np.testing.assert_allclose(res.adversarial.weights, p.weights, atol=1e-12)


def test_dro_config_validation():
    with pytest.raises(ConfigError):
        DroConfig(0.0)
    with pytest.raises(ConfigError):
        DroConfig(0.1, (0.0, 1.0))
