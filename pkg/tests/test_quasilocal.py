import numpy as np
import pytest

from qloc import algebra, decay
from qloc.algebra import SX, SZ, ProductState, operator, opnorm
from qloc.decay import DecayFunction
from qloc.dynamics import lr_bound
from qloc.errors import PreconditionError
from qloc.interactions import Interaction, hamiltonian
from qloc.lattice import regularity_audit
from qloc.models import chain, tfi
from qloc.quasilocal import (QLParams, QuasiLocalMap, composition_bound, diff_dynamics_audit,
                             diff_dynamics_ql_bound, estimate_decay, local_approx, rho_independence_audit,
                             shell_series, transform_decay_audit, transform_interaction)

BASE = DecayFunction.power(2)
FA = decay.weighted_f(BASE, decay.Weight.power(1.0, 1.0))


def tau(G, t, h=1.0):
    return QuasiLocalMap.from_dynamics(tfi(G, 1.0, h), FA, G, G.sites, 0.0, t)


def test_linearity(rng):
    assert tau(chain(4), 0.4).linearity_residual(rng) <= 1e-12


def test_identity_has_no_decay():
    G = chain(5)
    emp = estimate_decay(QuasiLocalMap.identity(G.sites), G)
    assert np.all(emp.raw[1:] == 0.0)


def test_conjugation_decay_vanishes_beyond_its_support():
    G = chain(5)
    U = operator([1, 2], algebra.unitary_exp(np.kron(SX, SZ), 0.7))
    K = QuasiLocalMap.conjugation(U, G.sites)
    emp = estimate_decay(K, G, regions=[(0,)])
    # K(A) lives on {0, 1, 2}; probes at sites 3 and 4 commute with it
    assert emp.raw[1] > 0.0 and emp.raw[2] > 0.0
    assert np.all(emp.raw[3:] == 0.0)


def test_dynamics_decay_below_lieb_robinson():
    G = chain(6)
    K = tau(G, 0.5)
    emp = estimate_decay(K, G, regions=[(0,)], q=0.0)
    for d in range(1, 6):
        lr = lr_bound(tfi(G), FA, G, [0], [d], 0.0, 0.5).value
        assert emp.raw[d] <= min(2.0, lr) + 1e-12
    assert np.all(np.diff(emp.values) <= 0)


def test_local_approx_trivial_cases():
    G = chain(5)
    rho = ProductState.tracial(G.sites)
    A = operator([2], SZ)
    ident = QuasiLocalMap.identity(G.sites)
    assert local_approx(ident, A, [2], 1, rho, G).error == pytest.approx(0.0, abs=1e-14)
    full = local_approx(tau(G, 0.5), A, [2], 4, rho, G)
    assert full.error == pytest.approx(0.0, abs=1e-12)


def test_local_approx_dynamics_within_bound():
    G = chain(8)
    rho = ProductState.tracial(G.sites)
    res = local_approx(tau(G, 0.5), operator([3], SZ), [3], 2, rho, G)
    assert res.passed
    assert res.error > 0.0


def test_shell_series_reconstructs():
    G = chain(6)
    rho = ProductState.pure(G.sites)
    series = shell_series(tau(G, 0.5), operator([2], SZ), [2], rho, G)
    assert series.residual <= 1e-12
    assert all(r.passed for r in series.records())


def test_composition_exponent_collapse():
    G1, G2 = DecayFunction.exponential(1.0), DecayFunction.power(3)
    inner = QLParams(1.0, 0.0, 2.0, 1.0, G1)
    outer = QLParams(1.0, 0.0, 3.0, 0.0, G2)
    comp = composition_bound(inner, outer, "outer_bounded", nu=1.0, kappa=3.0)
    r = np.linspace(0.0, 20.0, 41)
    np.testing.assert_allclose(comp.G(r), G2(r / 2) + G1(r / 2), rtol=1e-14)
    assert comp.C == max(inner.B * outer.C, 4.0 * inner.C * outer.B)


def test_composition_finite_range_stays_finite_range():
    cut = DecayFunction.tabulated([0, 1, 2, 3], [1.0, 0.5, 0.25, 0.0], tail=0.0)
    inner = QLParams(1.0, 0.0, 1.0, 1.0, cut)
    outer = QLParams(1.0, 0.0, 1.0, 1.0, cut)
    for mode in ("outer_bounded", "general"):
        comp = composition_bound(inner, outer, mode, nu=1.0, kappa=3.0)
        assert np.all(comp.G(np.array([6.0, 7.0, 10.0, 30.0])) == 0.0)
        assert comp.G(4.0) > 0.0


def test_composition_general_needs_moment():
    inner = QLParams(1.0, 0.0, 1.0, 1.0, DecayFunction.power(1))
    outer = QLParams(1.0, 1.0, 1.0, 1.0, DecayFunction.power(2))
    with pytest.raises(PreconditionError):
        composition_bound(inner, outer, "general", nu=1.0, kappa=3.0)


def test_composed_dynamics_below_composition_bound():
    G = chain(6)
    K1, K2 = tau(G, 0.3), tau(G, 0.2, h=0.6)
    kappa = regularity_audit(G, 1.0).kappa
    comp = composition_bound(K1.params, K2.params, "outer_bounded", nu=1.0, kappa=kappa)
    emp = estimate_decay(K1.then(K2, comp), G, q=comp.q)
    for d in range(1, len(emp.raw)):
        assert emp.raw[d] <= comp.C * float(comp.G(d)) + 1e-12


def test_rho_independence():
    G = chain(5)
    K1, K2 = tau(G, 0.3), tau(G, 0.2, h=0.6)
    A = operator([2], SX)
    tracial, pure = ProductState.tracial(G.sites), ProductState.pure(G.sites)
    assert rho_independence_audit(K1, K2, A, [2], tracial, tracial, G) == 0.0
    assert rho_independence_audit(K1, K2, A, [2], tracial, pure, G) <= 1e-10
    ident = QuasiLocalMap.identity(G.sites)
    assert rho_independence_audit(K1, ident, A, [2], tracial, pure, G) <= 1e-12


def test_transform_identity_returns_phi():
    G = chain(5)
    Phi = tfi(G, 1.0, 0.7)
    T = transform_interaction(QuasiLocalMap.identity(G.sites), Phi, G.sites, ProductState.tracial(G.sites), G,
                              drop=1e-14)
    assert set(T.terms) == set(Phi.supports())
    for Z in Phi.supports():
        np.testing.assert_allclose(T.terms[Z].matrix, Phi.term(Z).matrix, atol=1e-14)


def test_transform_zero_interaction():
    G = chain(4)
    T = transform_interaction(QuasiLocalMap.identity(G.sites), Interaction(), G.sites,
                              ProductState.tracial(G.sites), G)
    assert len(T.psi) == 0 and T.residual == 0.0


def test_transform_dynamics_reconstructs():
    G = chain(8)
    Phi = tfi(G)
    K = tau(G, 1.0)
    T = transform_interaction(K, Phi, G.sites, ProductState.tracial(G.sites), G)
    assert T.residual <= 1e-10
    target = K(hamiltonian(Phi, G.sites)).matrix
    assert np.abs(T.total() - target).max() <= 1e-10
    for Z, op in T.terms.items():
        assert op.support == Z
        assert algebra.is_hermitian(op.matrix, 1e-10)


def test_transform_sum_independent_of_state():
    G = chain(6)
    Phi = tfi(G)
    K = tau(G, 0.5)
    a = transform_interaction(K, Phi, G.sites, ProductState.tracial(G.sites), G)
    b = transform_interaction(K, Phi, G.sites, ProductState.pure(G.sites), G)
    assert opnorm(a.total() - b.total()) <= 1e-10
    some = next(Z for Z in a.terms if len(Z) == 3)
    assert np.abs(a.terms[some].matrix - b.terms[some].matrix).max() > 1e-6


def test_transform_decay_identity_and_zero():
    G = chain(5)
    Phi = tfi(G)
    rho = ProductState.tracial(G.sites)
    ident = QuasiLocalMap.identity(G.sites)
    T = transform_interaction(ident, Phi, G.sites, rho, G)
    assert all(r.passed for r in transform_decay_audit(T, Phi, BASE, G, ident.params, nu=1.0))
    T0 = transform_interaction(ident, Interaction(), G.sites, rho, G)
    recs = transform_decay_audit(T0, Interaction(), BASE, G, ident.params, nu=1.0)
    assert all(r.lhs == 0.0 for r in recs)


def test_transform_decay_dynamics():
    G = chain(8)
    Phi = tfi(G)
    K = tau(G, 0.5)
    T = transform_interaction(K, Phi, G.sites, ProductState.tracial(G.sites), G)
    recs = transform_decay_audit(T, Phi, FA, G, K.params, nu=1.0)
    assert len(recs) == 64
    assert all(r.passed for r in recs)


def test_diff_dynamics_trivial():
    G = chain(5)
    Phi = tfi(G)
    assert diff_dynamics_ql_bound(Phi, Phi, FA, G, [0], [4], 0.0, 0.5).value == 0.0
    assert diff_dynamics_ql_bound(Phi, tfi(G, 1.0, 1.3), FA, G, [0], [4], 0.0, 0.0).value == 0.0
    rec = diff_dynamics_audit(Phi, Phi, FA, G, operator([0], SX), operator([4], SZ), 0.0, 0.5)
    assert rec.lhs == 0.0 and rec.rhs == 0.0


def test_diff_dynamics_tfi8():
    G = chain(8)
    rec = diff_dynamics_audit(tfi(G), tfi(G, 1.0, 1.01), FA, G, operator([0], SX), operator([7], SZ), 0.0, 0.5)
    assert rec.passed
    assert rec.lhs > 0.0


def test_diff_dynamics_needs_moment():
    G = chain(4)
    with pytest.raises(PreconditionError):
        diff_dynamics_ql_bound(tfi(G), tfi(G, 1.0, 1.1), BASE, G, [0], [3], 0.0, 0.5, nu=1.0)
