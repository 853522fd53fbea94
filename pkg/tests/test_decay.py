import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qloc import decay
from qloc.decay import DecayFunction, Weight
from qloc.errors import DivergenceError, DomainError, PreconditionError, ValidationError
from qloc.lattice import build_box


def brute_norm(F, G):
    return max(sum(F(G.d(x, y)) for y in G.sites) for x in G.sites)


def brute_conv(F, G):
    best = 0.0
    for x in G.sites:
        for y in G.sites:
            s = sum(F(G.d(x, z)) * F(G.d(z, y)) for z in G.sites)
            best = max(best, s / F(G.d(x, y)))
    return best


P2 = DecayFunction.power(2)


def test_uniform_norm_chain5():
    G = build_box(1, [5])
    assert decay.f_uniform_norm(P2, G) == pytest.approx(1 + 2 / 4 + 2 / 9, abs=1e-15)
    assert decay.f_uniform_norm(P2, G) == pytest.approx(brute_norm(P2, G), abs=1e-14)


def test_single_site_constants():
    G = build_box(1, [1])
    assert decay.f_uniform_norm(P2, G) == 1.0
    assert decay.f_convolution_constant(P2, G) == 1.0


def test_convolution_constant_chain3():
    c = decay.f_constants(P2, build_box(1, [3]))
    assert abs(c.conv_constant - 41 / 16) <= 1e-12
    assert set(c.argmax_conv) == {0, 2}


def test_convolution_constant_chain20_below_four_norms():
    G = build_box(1, [20])
    c = decay.f_constants(P2, G)
    assert c.conv_constant == pytest.approx(brute_conv(P2, G), rel=1e-12)
    assert c.conv_constant <= 4 * c.uniform_norm


@given(st.floats(1.1, 4.0), st.integers(1, 2), st.integers(2, 5))
def test_constants_match_brute_force(p, nu, L):
    G = build_box(nu, [L] * nu)
    F = DecayFunction.power(p)
    c = decay.f_constants(F, G)
    assert c.uniform_norm == pytest.approx(brute_norm(F, G), rel=1e-12)
    assert c.conv_constant == pytest.approx(brute_conv(F, G), rel=1e-12)
    assert c.uniform_norm >= F(0.0)


def test_weighted_examples():
    g = Weight.power(1.0, 1.0)
    Fg = decay.weighted_f(P2, g)
    assert Fg(1.0) == pytest.approx(math.exp(-1) / 4, rel=1e-15)
    same = decay.weighted_f(P2, Weight.zero())
    r = np.linspace(0, 20, 41)
    assert np.array_equal(same(r), P2(r))
    G = build_box(1, [10])
    assert decay.f_uniform_norm(Fg, G) <= decay.f_uniform_norm(P2, G)


@given(st.floats(0.0, 3.0), st.floats(0.05, 1.0))
def test_power_weights_are_subadditive(a, theta):
    assert Weight.power(a, theta).subadditivity_violation() <= 1e-9


def test_weighted_f_rejects_superadditive_weight():
    bad = Weight(lambda r: r**2, "square")
    with pytest.raises(ValidationError):
        decay.weighted_f(P2, bad)


def test_moment_geometric_closed_forms():
    Gf = DecayFunction.geometric(2.0)
    assert decay.moment(Gf, 0, 0) == pytest.approx(2.0, rel=1e-14)
    assert decay.moment(Gf, 1, 0) == pytest.approx(4.0, rel=1e-14)
    assert decay.moment(Gf, 0, 3) == pytest.approx(2.0 * 2.0**-3, rel=1e-14)
    assert decay.moment(Gf, 0, 2 * 10**6) == 0.0


@given(st.floats(0.0, 3.0), st.integers(0, 30))
def test_moment_tail_of_exponential(p, m):
    Gf = DecayFunction.exponential(1.0)
    n = np.arange(m, 400)
    assert decay.moment(Gf, p, m) == pytest.approx(float(((1 + n) ** p * np.exp(-n)).sum()), rel=1e-12)


def test_moment_divergence_and_domain():
    with pytest.raises(DivergenceError):
        decay.moment(DecayFunction.power(1.5), 2.0)
    with pytest.raises(DomainError):
        decay.moment(P2, -1.0)


def test_transform_step():
    G = build_box(1, [10])
    F0, b0 = decay.transform_step(P2, 0.0, 1.0, G)
    r = np.linspace(0, 9, 19)
    assert np.allclose(F0(r), P2(r))
    Ft, bounds = decay.transform_step(P2, 2.0, 1.0, G)
    assert Ft.monotonicity_violation() == 0.0
    assert brute_norm(Ft, G) <= bounds.norm_bound
    assert brute_conv(Ft, G) <= bounds.conv_bound
    bounds.check(Ft, G)
    with pytest.raises(PreconditionError):
        decay.transform_step(P2, 2.0, 0.01, G)


def test_transform_dilate_and_shift():
    G = build_box(1, [10])
    Fa = decay.weighted_f(P2, Weight.power(1.0, 1.0))
    r = np.linspace(0, 9, 19)
    same, _ = decay.transform_shift_dilate(Fa, G, epsilon=1.0)
    assert np.allclose(same(r), Fa(r), rtol=1e-15)
    same, _ = decay.transform_shift_dilate(Fa, G, shift=0.0)
    assert np.allclose(same(r), Fa(r), rtol=1e-15)
    Ft, bounds = decay.transform_shift_dilate(Fa, G, epsilon=0.5)
    assert brute_norm(Ft, G) <= bounds.norm_bound
    assert brute_conv(Ft, G) <= bounds.conv_bound
    Ft, bounds = decay.transform_shift_dilate(Fa, G, shift=2.0)
    assert brute_norm(Ft, G) <= bounds.norm_bound
    assert brute_conv(Ft, G) <= bounds.conv_bound
    with pytest.raises(DomainError):
        decay.transform_shift_dilate(Fa, G, epsilon=0.5, shift=1.0)


@given(st.floats(0.1, 1.0), st.floats(0.0, 3.0))
def test_transform_bounds_hold_on_square(eps, a):
    G = build_box(2, [4, 4])
    Fa = decay.weighted_f(DecayFunction.power(3), Weight.power(0.5, 1.0))
    for Ft, bounds in (decay.transform_dilate(Fa, eps, G), decay.transform_shift(Fa, a, G),
                       decay.transform_step(Fa, a, float(Fa(0.0)), G)):
        c = decay.f_constants(Ft, G)
        assert c.uniform_norm <= bounds.norm_bound * (1 + 1e-12)
        assert c.conv_constant <= bounds.conv_bound * (1 + 1e-12)


def test_tail_sum_profile_matches_enumeration():
    G = build_box(1, [7])
    prof = decay.tail_sum_profile(P2, G)
    for r in range(0, 8):
        want = max(sum(P2(G.d(x, y)) for y in G.sites if G.d(x, y) >= r) for x in G.sites)
        assert prof(float(r)) == pytest.approx(want, abs=1e-15)
    assert prof(2.5) == prof(3.0)


def test_tabulated_validation():
    with pytest.raises(ValidationError):
        DecayFunction.tabulated([0, 1, 2], [1.0, 2.0, 0.5])
    T = DecayFunction.tabulated([0, 1, 2], [1.0, 0.5, 0.25], tail=0.0)
    assert T(1.5) == 0.5 and T(3.0) == 0.0


def test_borderline_moments_diverge():
    with pytest.raises(DivergenceError):
        decay.moment(DecayFunction.power(2), 1.0)
    with pytest.raises(DivergenceError):
        decay.moment(DecayFunction.power(1), 0.0)
    logw = decay.weighted_f(DecayFunction.power(1), decay.Weight.log(1.0))
    with pytest.raises(DivergenceError):
        decay.moment(logw, 1.0)
    assert decay.moment(logw, 0.0) == pytest.approx(math.pi**2 / 6, rel=1e-5)
