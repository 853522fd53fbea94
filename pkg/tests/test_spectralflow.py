import warnings

import numpy as np
import pytest
from scipy import integrate

from qloc import algebra, spectralflow as sf, weightfn
from qloc.algebra import SX, ProductState, opnorm
from qloc.decay import DecayFunction, Weight
from qloc.errors import DomainError, PreconditionError
from qloc.interactions import Interaction, Schedule, hamiltonian, hamiltonian_derivative
from qloc.models import chain, classical_ising, tfi
from qloc.quasilocal import QLParams, QuasiLocalMap, estimate_decay

TABLES = weightfn.constants()


def gapped(n=5, h=2.0):
    G = chain(n)
    H = hamiltonian(tfi(G, 1.0, h), G.sites).matrix
    E = np.linalg.eigvalsh(H)
    return G, H, E[1] - E[0]


def test_F_of_identity_and_G_of_function_of_H():
    _, H, gap = gapped(4)
    one = np.eye(len(H))
    np.testing.assert_allclose(sf.weighted_integral(one, H, gap / 2, "F"), one, atol=1e-12)
    fH = H @ H - 3 * H
    assert np.abs(sf.weighted_integral(fH, H, gap / 2, "G")).max() <= 1e-12
    with pytest.raises(DomainError):
        sf.weighted_integral(one, H, 1.0, "X")
    with pytest.raises(DomainError):
        sf.weighted_integral(one, H, 0.0, "F")


def test_F_block_diagonal_and_hermitian(rng):
    _, H, gap = gapped(5)
    P, _ = sf.ground_projection(H)
    A = algebra.random_hermitian(len(H), rng)
    FA = sf.weighted_integral(A, H, gap / 2, "F")
    Q = np.eye(len(H)) - P
    assert opnorm(P @ FA @ Q) <= 1e-6
    assert algebra.is_hermitian(FA, 1e-12)
    assert algebra.is_hermitian(sf.weighted_integral(A, H, gap / 2, "G"), 1e-12)


def test_inverse_liouvillean_identities(rng):
    _, H, gap = gapped(5)
    A = algebra.random_matrix(len(H), rng)
    recs = sf.inverse_liouvillean_audit(A, H, gap / 2)
    assert all(r.passed for r in recs)
    commuting = sf.inverse_liouvillean_audit(H @ H, H, gap / 2)
    assert all(r.lhs <= 1e-10 for r in commuting)
    with pytest.raises(PreconditionError):
        sf.inverse_liouvillean_audit(A, H, 2 * gap)


def test_cutoff_refinement_shrinks_residuals(rng):
    _, H, gap = gapped(5)
    gamma = gap / 2
    A = algebra.random_matrix(len(H), rng)
    base = sf.inverse_liouvillean_audit(A, H, gamma, cutoff=sf.Cutoff(60 / gamma, 0.1 / gamma))
    fine = sf.inverse_liouvillean_audit(A, H, gamma, cutoff=sf.Cutoff(120 / gamma, 0.05 / gamma))
    for a, b in zip(base, fine):
        assert 2 * b.lhs <= a.lhs


def test_kernels_match_cutoff_route():
    omega = np.linspace(-6.0, 6.0, 41)
    cut = sf.Cutoff(200.0, 0.05)
    np.testing.assert_allclose(sf.kernel_F(omega, 1.0), sf.kernel_F(omega, 1.0, cut), atol=1e-9)
    np.testing.assert_allclose(sf.kernel_G(omega, 1.0), sf.kernel_G(omega, 1.0, cut), atol=1e-9)


def test_kernel_G_near_zero_is_continuous():
    w = np.array([0.5e-7, 0.99e-7, 1.01e-7, 2e-7, 1e-5])
    slope = sf.second_moment(TABLES) / 2
    for cut in (None, sf.Cutoff(200.0, 0.05)):
        vals = sf.kernel_G(w, 1.0, cut)
        np.testing.assert_allclose(vals.imag / w, slope, rtol=1e-6)
        assert np.all(vals.real == 0.0)
    assert sf.kernel_G(0.0, 1.0) == 0.0


def test_moments_against_quadrature():
    m2, _ = integrate.quad(lambda t: t * t * float(TABLES.w(t)), 0.0, 600.0, limit=800)
    assert sf.second_moment(TABLES, 2.0) == pytest.approx(2 * m2 / 4.0, rel=1e-8)
    m1, _ = integrate.quad(lambda x: float(TABLES.W(x)), 0.0, 600.0, limit=800)
    assert sf.first_abs_moment(TABLES, 1.0) == pytest.approx(2 * m1, rel=1e-7)


def test_generator_trivial_cases():
    G = chain(4)
    assert not np.any(sf.hastings_generator(tfi(G, 1.0, 2.0), G.sites, 0.3, 1.0))
    # H' = sigma^x_total commutes with an H built from sigma^x alone
    Phi = Interaction.from_terms([((x,), SX, Schedule.affine(1.0, 1.0)) for x in G.sites])
    assert opnorm(sf.hastings_generator(Phi, G.sites, 0.5, 1.0)) <= 1e-12


def test_generator_against_brute_quadrature():
    G = chain(6)
    Phi = tfi(G, 1.0, Schedule.affine(2.0, 2.0))
    H = hamiltonian(Phi, G.sites, 0.5).matrix
    Hp = hamiltonian_derivative(Phi, G.sites, 0.5).matrix
    E = np.linalg.eigvalsh(H)
    gamma = (E[1] - E[0]) / 2
    D = sf.hastings_generator(Phi, G.sites, 0.5, gamma)
    assert algebra.is_hermitian(D, 1e-10)
    brute = sf.brute_weighted_integral(Hp, H, gamma, "G", 24.0, 4001)
    assert opnorm(D - brute) <= 1e-6


def test_flow_trivial_cases():
    G = chain(4)
    res = sf.flow(tfi(G, 1.0, 2.0), G.sites, 1.0, np.linspace(0, 1, 3), 0.25)
    for U in res.U:
        np.testing.assert_allclose(U, np.eye(16), atol=1e-14)
    assert np.all(res.transport <= 1e-12)
    A = algebra.random_hermitian(16, np.random.default_rng(2))
    np.testing.assert_allclose(res.cocycle(A, 2, 1), A, atol=1e-12)
    with pytest.raises(DomainError):
        sf.flow(tfi(G), G.sites, 1.0, [0, 1], 0.0)


def test_flow_transports_ground_projection():
    G = chain(6)
    Phi = tfi(G, 1.0, Schedule.affine(2.0, 2.0))
    prof = sf.gap_audit(Phi, [G.sites], np.linspace(0, 1, 11))
    gamma = prof.min_gap / 2
    s = np.linspace(0, 1, 11)
    coarse = sf.flow(Phi, G.sites, gamma, s, 0.1)
    fine = sf.flow(Phi, G.sites, gamma, s, 0.05)
    assert coarse.transport.max() <= 0.05
    assert 2 * fine.transport.max() <= coarse.transport.max()
    assert coarse.unitarity <= 1e-8
    budget = sf.transport_budget(Phi, G.sites, coarse, fine)
    assert np.all(coarse.transport <= 10 * budget + 1e-12)


def test_automorphic_equivalence():
    G = chain(4)
    const = sf.automorphic_equivalence_audit(tfi(G, 1.0, 2.0), G.sites, 1.0, np.linspace(0, 1, 3), 0.25)
    assert const["max_residual"] <= 1e-12
    Phi = tfi(G, 1.0, Schedule.affine(2.0, 2.0))
    prof = sf.gap_audit(Phi, [G.sites], np.linspace(0, 1, 5))
    out = sf.automorphic_equivalence_audit(Phi, G.sites, prof.min_gap / 2, np.linspace(0, 1, 5), 0.05,
                                           profile=prof)
    assert out["passed"]
    assert all(r["residual"] <= 1e-12 for r in out["rows"] if r["s"] == r["t"])
    assert min(out["fidelity"]) >= 1 - 0.05
    with pytest.raises(PreconditionError):
        sf.automorphic_equivalence_audit(Phi, G.sites, 2 * prof.min_gap, [0, 1], 0.1, profile=prof)
    flat = sf.gap_audit(classical_ising(G), [G.sites], [0.0], policy="window", gamma=100.0)
    with pytest.raises(PreconditionError):
        sf.automorphic_equivalence_audit(Phi, G.sites, 1.0, [0, 1], 0.1, profile=flat)


def test_hastings_interaction_trivial():
    G = chain(4)
    T = sf.hastings_interaction(tfi(G, 1.0, 2.0), G.sites, 0.0, 1.0, ProductState.tracial(G.sites), G)
    assert all(opnorm(op) == 0.0 for op in T.terms.values())


def test_hastings_interaction_reconstructs_generator():
    G = chain(8)
    Phi = tfi(G, 1.0, Schedule.affine(4.0, 4.0))
    T = sf.hastings_interaction(Phi, G.sites, 0.5, 2.0, ProductState.tracial(G.sites), G)
    D = sf.hastings_generator(Phi, G.sites, 0.5, 2.0)
    assert np.abs(T.total() - D).max() <= 1e-10
    by_diam = sf.term_norms_by_diameter(T, G)
    assert by_diam[7] < by_diam[2]


def test_nested_volume_differences_shrink():
    G = chain(10)
    Phi = tfi(G, 1.0, Schedule.affine(4.0, 4.0))
    vols = [tuple(range(2, 8)), tuple(range(1, 9)), tuple(range(10))]
    diffs = sf.nested_volume_differences(Phi, G, vols, [3, 4, 5], 0.0, 2.0, ProductState.tracial(G.sites))
    assert diffs[1] < diffs[0]


def test_flow_ql_bound_plateaus():
    G = chain(6)
    inputs = sf.lr_exponential_inputs(tfi(G), DecayFunction.power(2), 1.0, G)
    gamma = 1.0
    GG = sf.flow_ql_bound(inputs, gamma, 0.5, "G")
    GF = sf.flow_ql_bound(inputs, gamma, 0.5, "F")
    ds = sf.d_star(inputs, gamma, 0.5, TABLES.eta)
    assert ds > 0
    assert GF(0.0) == 1.0
    assert GG(0.0) == pytest.approx(sf.first_abs_moment(TABLES, gamma), rel=1e-15)
    assert GG(min(ds, 5.0)) == GG(0.0)
    far = np.linspace(ds + 1, ds + 1e5, 50)
    assert np.all(np.diff(GF(far)) <= 0)
    with pytest.raises(DomainError):
        sf.d_star(inputs, gamma, 1.5, TABLES.eta)


def test_flow_ql_bound_log_weight_warns():
    inputs = sf.FlowQLInputs(1.0, 1.0, Weight.log(1.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sf.flow_ql_bound(inputs, 1.0, 0.5, "F")
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_flow_ql_bound_dominates_empirical_decay():
    G = chain(5)
    Phi = tfi(G, 1.0, 2.0)
    _, H, gap = gapped(5)
    gamma = gap / 2
    inputs = sf.lr_exponential_inputs(Phi, DecayFunction.power(2), 1.0, G)
    sp = sf.Spectrum.of(H)
    for mode in ("F", "G"):
        kern = sf.kernel_F(sp.omega, gamma) if mode == "F" else sf.kernel_G(sp.omega, gamma)
        K = QuasiLocalMap(lambda M, k=kern: sp.from_eigen(k * sp.to_eigen(M)), G.sites, QLParams())
        emp = estimate_decay(K, G, q=1.0)
        bound = sf.flow_ql_bound(inputs, gamma, 0.5, mode)
        for d in range(1, len(emp.raw)):
            assert emp.raw[d] <= 2.0 * float(bound(d)) + 1e-12


def test_gap_audit_classical_ising():
    G = chain(5)
    prof = sf.gap_audit(classical_ising(G, 1.0), [G.sites], [0.0])
    row = prof.rows[0]
    assert row["cluster"] == 2 and row["width"] == 0.0
    assert row["gap"] == pytest.approx(2.0, abs=1e-12)


def test_gap_audit_tfi_sizes():
    G = chain(8)
    prof = sf.gap_audit(tfi(G, 1.0, 2.0), [range(4), range(6), range(8)], [0.0, 1.0])
    assert prof.gapped and prof.min_gap > 0
    assert {r["n_sites"] for r in prof.rows} == {4, 6, 8}


def test_gap_audit_two_level():
    Phi = Interaction.from_terms([((0,), SX, Schedule.affine(1.0, 1.0))])
    prof = sf.gap_audit(Phi, [(0,)], np.linspace(0, 1, 5))
    for r in prof.rows:
        assert r["gap"] == pytest.approx(2 * (1 + r["s"]), rel=1e-12)
    assert prof.min_gap == pytest.approx(2.0)


def test_cluster_split_policies():
    E = np.array([0.0, 0.0, 2.0, 2.5, 7.0])
    assert sf.cluster_split(E).size == 2
    assert sf.cluster_split(E, "count", size=4).gap == 4.5
    assert sf.cluster_split(E, "window", gamma=3.0).size == 4
    assert sf.cluster_split(E, "window", gamma=10.0).ambiguous
    with pytest.raises(DomainError):
        sf.cluster_split(E, "count")
    with pytest.raises(DomainError):
        sf.cluster_split(E, "nearest")
    assert sf.cluster_split(np.arange(6.0)).size == 1
    assert sf.cluster_split(np.array([0.0] * 5 + [1.0])).ambiguous
