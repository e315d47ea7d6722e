import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratioreject.divergences import (
    DiscreteDistribution,
    divergence,
    phi_alpha,
    psi_alpha,
    psi_alpha_inv,
)
from ratioreject.errors import DataError, DomainError, SupportMismatchError


def phi_exact(alpha, z):
    """Rational evaluation of the alpha != +-1 generator for odd integer alpha."""
    alpha, z = Fraction(alpha), Fraction(z)
    power = z ** int((1 + alpha) / 2)
    return Fraction(4) / (1 - alpha**2) * (1 - power) + Fraction(2) / (1 - alpha) * (z - 1)


@pytest.mark.parametrize("alpha", [-3.0, -1.0, 0.0, 0.5, 1.0, 3.0, 5.0])
def test_phi_vanishes_at_one(alpha):
    assert phi_alpha(alpha, 1.0) == 0.0


def test_phi_kl_at_e():
    assert phi_alpha(1.0, math.e) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("alpha,z", [(3, 2), (3, Fraction(1, 2)), (5, 3), (-3, 2), (7, Fraction(3, 4))])
def test_phi_matches_rational_evaluation(alpha, z):
    assert phi_alpha(alpha, float(z)) == pytest.approx(float(phi_exact(alpha, z)), rel=1e-13, abs=1e-15)


def test_phi_chi_square_is_half_squared_gap():
    z = np.linspace(0, 5, 41)
    np.testing.assert_allclose(phi_alpha(3.0, z), 0.5 * (z - 1) ** 2, atol=1e-13)
    assert phi_alpha(3.0, 2.0) == pytest.approx(0.5)


@pytest.mark.parametrize("z", [0.1, 0.7, 2.0, 9.0])
def test_phi_continuous_across_alpha_one_and_minus_one(z):
    assert phi_alpha(1 + 1e-4, z) == pytest.approx(phi_alpha(1.0, z), abs=1e-3)
    assert phi_alpha(-1 + 1e-4, z) == pytest.approx(phi_alpha(-1.0, z), abs=1e-3)
    # inside the guard the KL branch is used verbatim
    assert phi_alpha(1 + 1e-7, z) == phi_alpha(1.0, z)


@given(alpha=st.sampled_from([-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 5.0]),
       z=st.floats(1e-6, 1e6))
def test_phi_non_negative(alpha, z):
    assert phi_alpha(alpha, z) >= -1e-9 * max(1.0, z)


def test_phi_domain_errors():
    with pytest.raises(DomainError):
        phi_alpha(2.0, -0.1)
    with pytest.raises(DomainError):
        phi_alpha(-1.0, 0.0)
    assert phi_alpha(1.0, 0.0) == 1.0


def test_psi_examples():
    assert psi_alpha(3.0, 4.0) == pytest.approx(0.25)
    assert psi_alpha(1.0, 1.0) == 0.0
    assert psi_alpha_inv(3.0, 0.25) == pytest.approx(4.0)
    assert psi_alpha_inv(1.0, 0.0) == 1.0


@pytest.mark.parametrize("alpha", [-3.0, -1.0, 0.0, 1.0, 3.0, 5.0])
def test_psi_round_trip(alpha):
    z = np.geomspace(1e-6, 1e6, 301)
    back = psi_alpha_inv(alpha, psi_alpha(alpha, z))
    assert np.all(np.abs(back - z) <= 1e-10 * z)


@given(u=st.floats(1e-3, 1e3), v=st.floats(1e-3, 1e3), alpha=st.sampled_from([-3.0, 0.0, 3.0, 5.0]))
def test_psi_multiplicative(u, v, alpha):
    assert psi_alpha(alpha, u * v) == pytest.approx(psi_alpha(alpha, u) * psi_alpha(alpha, v), rel=1e-12)
    assert psi_alpha(alpha, 1 / v) == pytest.approx(1 / psi_alpha(alpha, v), rel=1e-12)


def test_psi_domain_errors():
    with pytest.raises(DomainError):
        psi_alpha(3.0, 0.0)
    with pytest.raises(DomainError):
        psi_alpha_inv(3.0, -1.0)


def test_distribution_validation():
    with pytest.raises(DataError):
        DiscreteDistribution(("a", "a"), [0.5, 0.5])
    with pytest.raises(DataError):
        DiscreteDistribution(("a", "b"), [0.5, 0.6])
    with pytest.raises(DataError):
        DiscreteDistribution(("a", "b"), [1.5, -0.5])
    d = DiscreteDistribution.from_weights(list("abc"), [1, 1, 1])
    assert math.fsum(d.weights) == 1.0


def test_divergence_identity_and_brute_force():
    p = DiscreteDistribution.uniform(list("abcd"))
    for alpha in (-3.0, -1.0, 0.0, 1.0, 3.0):
        assert divergence(alpha, p, p) == 0.0
    p2 = DiscreteDistribution.uniform(["a", "b"])
    q2 = DiscreteDistribution(("a", "b"), [0.75, 0.25])
    direct = 0.5 * (1.5 * math.log(1.5) - 0.5) + 0.5 * (0.5 * math.log(0.5) + 0.5)
    assert divergence(1.0, p2, q2) == pytest.approx(direct, abs=1e-15)


def test_divergence_alignment_and_mismatch():
    p = DiscreteDistribution(("a", "b"), [0.3, 0.7])
    q = DiscreteDistribution(("b", "a"), [0.4, 0.6])
    q_same = DiscreteDistribution(("a", "b"), [0.6, 0.4])
    assert divergence(3.0, p, q) == divergence(3.0, p, q_same)
    with pytest.raises(SupportMismatchError):
        divergence(1.0, p, DiscreteDistribution(("a", "c"), [0.5, 0.5]))


def test_divergence_infinite_outside_support():
    p = DiscreteDistribution(("a", "b"), [1.0, 0.0])
    q = DiscreteDistribution(("a", "b"), [0.5, 0.5])
    assert divergence(1.0, p, q) == math.inf
    assert divergence(3.0, p, q) == math.inf
    # q vanishing where p has mass is finite except for alpha <= -1
    assert math.isfinite(divergence(1.0, q, p))
    assert divergence(-1.0, q, p) == math.inf


weights = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12)


@settings(max_examples=200)
@given(wp=weights, data=st.data())
def test_kl_matches_independent_sum(wp, data):
    wq = data.draw(st.lists(st.floats(0.01, 1.0), min_size=len(wp), max_size=len(wp)))
    ids = [str(i) for i in range(len(wp))]
    p = DiscreteDistribution.from_weights(ids, wp)
    q = DiscreteDistribution.from_weights(ids, wq)
    kl = math.fsum(qi * math.log(qi / pi) for pi, qi in zip(p.weights, q.weights))
    assert divergence(1.0, p, q) == pytest.approx(kl, abs=1e-12)
    for alpha in (-3.0, 0.0, 3.0, 5.0):
        d = divergence(alpha, p, q)
        assert d >= 0.0
