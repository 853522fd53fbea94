import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from qloc import weightfn
from qloc.errors import DomainError
from qloc.weightfn import SQRT_2PI, f_b

TABLES = weightfn.constants()


def a1_oracle(N=10**7, chunk=10**6):
    """Partial sum of 1/(n ln^2 n) to N plus the integral tail 1/ln N."""
    total = 0.0
    for lo in range(2, N + 1, chunk):
        n = np.arange(lo, min(lo + chunk, N + 1), dtype=float)
        total += float((1.0 / (n * np.log(n) ** 2)).sum())
    return 0.5 / (1.0 + total + 1.0 / math.log(N))


def test_a1_against_series_oracle():
    ref = a1_oracle()
    assert 1 / 7 < TABLES.a1 < 1 / 2
    assert abs(ref - 0.1608) <= 1e-3
    assert TABLES.a1 == pytest.approx(ref, abs=1e-8)
    assert TABLES.eta == 2 * TABLES.a1


def test_series_sums_to_half():
    assert weightfn.series_sum_record(TABLES).passed


@pytest.mark.parametrize("gamma", [1.0, 2.0, 0.5])
def test_normalization(gamma):
    rec = weightfn.normalization_record(TABLES, gamma)
    assert rec.lhs <= 1e-6


def test_w_at_zero_and_symmetry():
    for gamma in (0.3, 1.0, 2.5):
        assert TABLES.w(0.0, gamma) == gamma * TABLES.c
        t = np.linspace(0.1, 40.0, 50)
        np.testing.assert_array_equal(TABLES.w(-t, gamma), TABLES.w(t, gamma))


@given(st.floats(-500.0, 500.0), st.floats(0.1, 5.0))
def test_w_non_negative_and_rescaled(t, gamma):
    val = TABLES.w(t, gamma)
    assert val >= 0.0
    assert val == pytest.approx(gamma * TABLES.w(gamma * t, 1.0), rel=1e-12, abs=1e-300)


def test_pointwise_bound():
    t = np.array([math.e, 5.0, 20.0, 100.0, 400.0])
    assert np.all(TABLES.w(t) <= weightfn.pointwise_bound(t, TABLES))
    with pytest.raises(DomainError):
        weightfn.pointwise_bound(1.0, TABLES)


def test_W_values():
    assert TABLES.W(0.0) == 0.5
    x = np.linspace(0.05, 60.0, 40)
    W = TABLES.W(x)
    np.testing.assert_array_equal(TABLES.W(-x), -W)
    assert np.all(np.abs(W) <= 0.5)
    assert np.all(np.diff(W) <= 0)


@pytest.mark.parametrize("x", [0.5, 3.0, 12.0])
def test_W_against_adaptive_quadrature(x):
    gamma = 2.0
    val, _ = integrate.quad(lambda t: float(TABLES.w(t, gamma)), x, 300.0, limit=400, epsabs=1e-13)
    assert TABLES.W(x, gamma) == pytest.approx(val, abs=1e-9)
    assert TABLES.W(x, gamma) == pytest.approx(TABLES.W(gamma * x, 1.0), abs=1e-12)


def cos_oracle(k, T):
    """Oscillatory quadrature of 2 int_0^T w(t) cos(k t) dt / sqrt(2 pi)."""
    val, _ = integrate.quad(lambda t: float(TABLES.w(t)), 0.0, T, weight="cos", wvar=k, limit=800)
    return 2.0 * val / SQRT_2PI


@pytest.mark.parametrize("k", [0.0, 0.4, 0.9, 1.05, 3.0])
def test_w_hat_against_oscillatory_oracle(k):
    coarse, fine = cos_oracle(k, 150.0), cos_oracle(k, 300.0)
    assert abs(coarse - fine) <= 1e-9
    assert float(TABLES.w_hat(k)) == pytest.approx(fine, abs=1e-8)


def test_w_hat_band_and_zero():
    assert float(TABLES.w_hat(0.0)) == pytest.approx(1 / SQRT_2PI, abs=1e-6)
    k = np.linspace(1.05, 10.0, 60)
    assert np.abs(TABLES.w_hat(k)).max() <= 1e-4
    np.testing.assert_allclose(TABLES.w_hat(-k), TABLES.w_hat(k), atol=1e-15)
    assert np.all(np.isreal(TABLES.w_hat(k)))


def test_fourier_support_audit():
    recs = weightfn.fourier_support_audit(TABLES)
    assert all(r.passed for r in recs)
    assert all(r.passed for r in weightfn.fourier_support_audit(TABLES, gamma=2.0))
    with pytest.raises(DomainError):
        weightfn.fourier_support_audit(TABLES, k_grid=[0.5])


def test_f_b_breakpoint():
    for b in (0.5, 1.0, 3.0):
        assert f_b(0.0, b) == math.e**2 / 4
    assert f_b(math.e**2, 1.0) == pytest.approx(math.e**2 / 4, rel=1e-15)
    assert f_b(math.e**2 * (1 + 1e-9), 1.0) == pytest.approx(math.e**2 / 4, rel=1e-8)
    with pytest.raises(DomainError):
        f_b(1.0, 0.0)
    with pytest.raises(DomainError):
        f_b(-1.0, 1.0)


@given(st.floats(0.0, 1e6), st.floats(0.0, 1e6))
def test_f_b_non_decreasing(x, y):
    lo, hi = sorted((x, y))
    assert f_b(lo, 1.0) <= f_b(hi, 1.0) * (1 + 1e-12)


def test_decay_audit():
    recs = weightfn.decay_audit(TABLES)
    assert len(recs) == 10
    assert all(r.passed for r in recs)
    with pytest.raises(DomainError):
        weightfn.decay_audit(TABLES, x_samples=[100.0])


def test_constants_preconditions():
    with pytest.raises(DomainError):
        weightfn.constants(series_N=1000)
    with pytest.raises(DomainError):
        weightfn.constants(factors=10)


def test_weight_table_rows():
    rows = weightfn.weight_table(TABLES, 1.0, [-1.0, 0.0, 1.0])
    assert [set(r) for r in rows] == [{"t", "w_gamma", "W_gamma"}] * 3
    assert rows[1]["W_gamma"] == 0.5
