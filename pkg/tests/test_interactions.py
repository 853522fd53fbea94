import numpy as np
import pytest
from hypothesis import given, strategies as st

from qloc import decay, interactions
from qloc.algebra import SX, SZ
from qloc.decay import DecayFunction
from qloc.errors import DivergenceError, DomainError, ValidationError
from qloc.interactions import Interaction, Schedule, f_norm, hamiltonian, its_integral, phi_boundary
from qloc.lattice import build_box
from qloc.models import chain, classical_ising, tfi

P2 = DecayFunction.power(2)
FA = decay.weighted_f(P2, decay.Weight.power(1.0, 1.0))


def brute_f_norm(Phi, F, G, t=0.0):
    best = 0.0
    norms = Phi.norms(t)
    for x in G.sites:
        for y in G.sites:
            s = sum(v for Z, v in norms.items() if x in Z and y in Z)
            best = max(best, s / F(G.d(x, y)))
    return best


def brute_tfi(n, J, h):
    I, out = np.eye(2), np.zeros((2**n, 2**n), dtype=complex)

    def site_op(op, k):
        mats = [op if j == k else I for j in range(n)]
        M = mats[0]
        for m in mats[1:]:
            M = np.kron(M, m)
        return M

    for k in range(n - 1):
        out -= J * site_op(SZ, k) @ site_op(SZ, k + 1)
    for k in range(n):
        out -= h * site_op(SX, k)
    return out


def test_tfi_f_norm_is_four():
    G = chain(6)
    rep = f_norm(tfi(G, 1.0, 1.0), P2, G)
    assert rep.f_norm == pytest.approx(4.0, rel=1e-14)
    assert rep.f_norm == pytest.approx(brute_f_norm(tfi(G, 1.0, 1.0), P2, G), rel=1e-14)
    assert abs(rep.argmax[0] - rep.argmax[1]) == 1


def test_zero_interaction_norm():
    G = chain(4)
    assert f_norm(Interaction(), P2, G).f_norm == 0.0


@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(0.0, 3))
def test_f_norm_homogeneous(lam, J, h):
    G = chain(5)
    Phi = tfi(G, J, h)
    assert f_norm(Phi.scaled(lam), P2, G).f_norm == pytest.approx(abs(lam) * f_norm(Phi, P2, G).f_norm,
                                                                  rel=1e-12, abs=1e-15)
    assert f_norm(Phi, P2, G).f_norm == pytest.approx(brute_f_norm(Phi, P2, G), rel=1e-12)


def test_hamiltonian_examples():
    G = chain(1)
    H = hamiltonian(Interaction(), G.sites, onsite={0: 0.7 * SX})
    assert np.allclose(np.linalg.eigvalsh(H.matrix), [-0.7, 0.7])
    assert np.allclose(hamiltonian(Interaction(), chain(3).sites).matrix, 0)


@given(st.integers(2, 5), st.floats(-2, 2), st.floats(-2, 2))
def test_hamiltonian_matches_dense_construction(n, J, h):
    G = chain(n)
    H = hamiltonian(tfi(G, J, h), G.sites).matrix
    assert np.allclose(H, brute_tfi(n, J, h), atol=1e-13)


def test_tfi_n4_spectrum():
    G = chain(4)
    H = hamiltonian(tfi(G, 1.0, 1.0), G.sites).matrix
    assert np.allclose(np.linalg.eigvalsh(H), np.linalg.eigvalsh(brute_tfi(4, 1.0, 1.0)), atol=1e-12)


def test_phi_boundary_examples():
    G = chain(6)
    Phi = tfi(G, 1.0, 1.0)
    assert phi_boundary(Phi, {2, 3}, G.sites).boundary == {2, 3}
    assert phi_boundary(Phi, {0, 1, 2}, G.sites).boundary == {2}
    assert phi_boundary(Phi, G.sites, G.sites).boundary == frozenset()
    onsite = Interaction.from_terms([((x,), SX, 1.0) for x in G.sites])
    for X in ({0}, {1, 2}, {5}):
        assert phi_boundary(onsite, X, G.sites).boundary == frozenset()


def test_its_integral_examples():
    G = chain(5)
    Phi = tfi(G, 1.0, 1.0)
    CF = decay.f_convolution_constant(P2, G)
    assert its_integral(Phi, P2, G, 0.3, 0.3) == 0.0
    M = f_norm(Phi, P2, G).f_norm
    assert its_integral(Phi, P2, G, 0.0, 0.8) == pytest.approx(CF * M * 0.8, rel=1e-14)
    ramp = Interaction.from_terms([((0,), SX, Schedule.affine(0.0, 1.0))])
    assert its_integral(ramp, P2, G, 0.0, 1.0) == pytest.approx(CF / 2, rel=1e-9)
    assert its_integral(ramp, P2, G, 1.0, 0.0) == pytest.approx(CF / 2, rel=1e-9)


def test_moment_interaction():
    G = chain(4)
    Phi = tfi(G, 1.0, 1.0)
    assert Phi.moment(0).norms() == Phi.norms()
    doubled = interactions.moment_interaction(Phi, 1)
    for Z, v in Phi.norms().items():
        assert doubled.norms()[Z] == pytest.approx(len(Z) * v)
    bonds = classical_ising(G, 1.0)
    for p in (0.0, 1.0, 2.5):
        assert f_norm(bonds.moment(p), P2, G).f_norm == pytest.approx(2**p * f_norm(bonds, P2, G).f_norm)


def test_schedules():
    s = Schedule.sine(1.0, 0.5)
    assert s(np.pi / 2) == pytest.approx(1.5)
    assert s.derivative(0.0) == pytest.approx(0.5)
    a = Schedule.affine(2.0, 2.0)
    assert a(0.5) == 3.0 and a.derivative(0.3) == 2.0
    assert Schedule.affine(2.0, 0.0).constant


def test_time_dependent_derivative_interaction():
    G = chain(3)
    Phi = tfi(G, 1.0, Schedule.affine(2.0, 2.0))
    D = Phi.derivative()
    for Z, v in D.norms(0.4).items():
        assert v == pytest.approx(2.0 if len(Z) == 1 else 0.0)


def test_appendix_sums_zero_interaction():
    G = chain(6)
    for r in interactions.appendix_sum_audit(Interaction(), FA, G, {2}, 1.0, nu=1):
        assert r.lhs == 0.0 and r.passed


def test_appendix_distance_sum_chain10():
    G = chain(10)
    Phi = tfi(G, 1.0, 1.0)
    R, X = 2.0, {4}
    recs = {r.name: r for r in interactions.appendix_sum_audit(Phi, P2, G, X, R, nu=1, checks=["distance"])}
    near = sum(v for Z, v in Phi.norms().items() if G.set_distance(Z, X) <= R)
    rhs = f_norm(Phi, P2, G).f_norm * sum(P2(G.d(x, y)) for x in G.inflate(X, R) for y in G.sites)
    assert recs["distance_near"].lhs == pytest.approx(near)
    assert recs["distance_near"].rhs == pytest.approx(rhs)
    assert near <= rhs
    assert all(r.passed for r in recs.values())


def test_appendix_large_diameter_empty_for_nearest_neighbour():
    G = chain(8)
    recs = {r.name: r for r in interactions.appendix_sum_audit(tfi(G, 1.0, 1.0), FA, G, {3}, 1.0, nu=1,
                                                               checks=["diameter"])}
    assert set(recs) == {"diameter_small", "diameter_large"}
    assert recs["diameter_large"].lhs == 0.0 < recs["diameter_large"].rhs


def test_appendix_moment_divergence_is_reported():
    G = chain(6)
    with pytest.raises(DivergenceError):
        interactions.appendix_sum_audit(tfi(G, 1.0, 1.0), P2, G, {2}, 1.0, nu=1, checks=["moment"])


def test_appendix_box_all_pass():
    G = build_box(2, [5, 5])
    Phi = tfi(G, 1.0, 1.0)
    recs = interactions.appendix_sum_audit(Phi, FA, G, [(2, 2)], 1.0, nu=2)
    assert {r.name for r in recs} >= {"distance_near", "distance_far", "diameter_small", "diameter_large",
                                      "moment", "weighted_sum"}
    assert all(r.passed for r in recs)


def test_construction_errors():
    with pytest.raises(ValidationError):
        Interaction.from_terms([((0,), np.array([[0, 1], [0, 0]]), 1.0)])
    with pytest.raises(DomainError):
        Interaction.from_terms([((0, 1), SX, 1.0)])
