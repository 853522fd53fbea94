"""Quasi-local maps, local approximations, composition calculators and transformed interactions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from . import algebra
from .algebra import PAULI, LocalOperator, ProductState, embed, local_decomposition, opnorm, partial_expectation
from .audit import AuditRecord
from .decay import DecayFunction, f_constants, moment, tail_sum_profile
from .dynamics import Propagator, boundary_sum, propagator
from .errors import AuditFailure, DivergenceError, DomainError, PreconditionError
from .interactions import Interaction, f_norm, hamiltonian, its_integral, pair_sums
from .lattice import MetricSpace, regularity_audit


@dataclass(frozen=True)
class QLParams:
    """Declared local bound ``||K(A)|| <= B |X|^p ||A||`` and decay ``C |X|^q G(d)``."""

    B: float = 1.0
    p: float = 0.0
    C: float = 0.0
    q: float = 0.0
    G: DecayFunction | None = None

    def commutator_bound(self, size: int, d: float, normA: float = 1.0, normB: float = 1.0) -> float:
        if self.C == 0.0 or self.G is None:
            return 0.0
        return self.C * size**self.q * normA * normB * float(self.G(d))

    def local_bound(self, size: int, normA: float = 1.0) -> float:
        return self.B * size**self.p * normA


class QuasiLocalMap:
    """Linear map on the observables of a fixed finite volume, with declared parameters.

    ``fn`` acts on full matrices over ``volume``; :meth:`__call__` embeds its
    argument first and returns an operator on the whole volume.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], volume: Iterable, params: QLParams = QLParams(),
                 dims: Mapping | None = None, adjoint_compatible: bool = True, name: str = "K"):
        self.fn = fn
        self.volume = tuple(sorted(volume))
        self.dims = algebra._dims_for(self.volume, dims)
        self.dim_map = dict(zip(self.volume, self.dims))
        self.params = params
        self.adjoint_compatible = adjoint_compatible
        self.name = name

    def __repr__(self):
        return f"QuasiLocalMap({self.name}, {len(self.volume)} sites)"

    def __call__(self, A: LocalOperator) -> LocalOperator:
        Ae = embed(A, self.volume, self.dim_map)
        return LocalOperator(self.volume, self.fn(Ae.matrix), self.dims)

    def with_params(self, params: QLParams) -> "QuasiLocalMap":
        return QuasiLocalMap(self.fn, self.volume, params, self.dim_map, self.adjoint_compatible, self.name)

    def then(self, outer: "QuasiLocalMap", params: QLParams = QLParams()) -> "QuasiLocalMap":
        """``outer o self``."""
        f1, f2 = self.fn, outer.fn
        return QuasiLocalMap(lambda M: f2(f1(M)), self.volume, params, self.dim_map,
                             self.adjoint_compatible and outer.adjoint_compatible, f"{outer.name}o{self.name}")

    # constructors ------------------------------------------------------------
    @classmethod
    def identity(cls, volume: Iterable, dims: Mapping | None = None):
        return cls(lambda M: M, volume, QLParams(1.0, 0.0, 0.0, 0.0, None), dims, name="id")

    @classmethod
    def conjugation(cls, U: LocalOperator, volume: Iterable, dims: Mapping | None = None):
        """``A -> U* A U`` for a unitary ``U`` supported in a region ``X0``."""
        vol = tuple(sorted(volume))
        Ue = embed(U, vol, {**(dims or {}), **U.dim_map}).matrix
        Uh = Ue.conj().T
        return cls(lambda M: Uh @ M @ Ue, vol, QLParams(1.0, 0.0, 0.0, 0.0, None), dims, name="conj")

    @classmethod
    def from_propagator(cls, P: Propagator, t: float, s: float, params: QLParams = QLParams()):
        W = P(t, s)
        Wh = W.conj().T
        return cls(lambda M: Wh @ M @ W, P.volume, params, dict(zip(P.volume, P.dims)), name=f"tau[{t:g},{s:g}]")

    @classmethod
    def from_dynamics(cls, Phi: Interaction, F: DecayFunction, G: MetricSpace, volume: Iterable,
                      s: float, t: float):
        """Heisenberg dynamics with parameters read off the Lieb-Robinson bound.

        ``C = 2 (e^{2I} - 1) / C_F``, ``q = 1`` and ``G`` the tail-sum profile of
        ``F``; the local bound is ``B = 1``, ``p = 0``.
        """
        vol = tuple(sorted(volume))
        CF = f_constants(F, G).conv_constant
        I = its_integral(Phi, F, G, s, t, conv_constant=CF)
        params = QLParams(1.0, 0.0, 2.0 * math.expm1(2.0 * I) / CF, 1.0, tail_sum_profile(F, G))
        if Phi.is_constant:
            H = hamiltonian(Phi, vol, s).matrix
            W = algebra.unitary_exp(H, t - s)
        else:
            W = propagator(Phi, vol, s, t, nodes=max(3, int(abs(t - s) / 0.05) + 1))(t, s)
        Wh = W.conj().T
        return cls(lambda M: Wh @ M @ W, vol, params, Phi.dims_map(), name=f"tau[{t:g},{s:g}]")

    # checks ---------------------------------------------------------------------
    def linearity_residual(self, rng: np.random.Generator, trials: int = 3) -> float:
        D = int(np.prod(self.dims))
        worst = 0.0
        for _ in range(trials):
            A, B = algebra.random_matrix(D, rng), algebra.random_matrix(D, rng)
            a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
            lhs = self.fn(a * A + b * B)
            rhs = a * self.fn(A) + b * self.fn(B)
            worst = max(worst, float(np.abs(lhs - rhs).max()) / max(1.0, float(np.abs(rhs).max())))
        return worst


# empirical decay -------------------------------------------------------------------

def _pauli_basis(support: tuple):
    """Non-identity Pauli strings on ``support``, normalized to unit norm."""
    for labels in itertools.product("IXYZ", repeat=len(support)):
        if all(c == "I" for c in labels):
            continue
        yield algebra.product_operator({s: PAULI[c] for s, c in zip(support, labels)})


@dataclass
class EmpiricalDecay:
    distances: np.ndarray
    values: np.ndarray
    raw: np.ndarray
    q: float
    probe_cap: int

    def as_decay(self) -> DecayFunction:
        grid = np.arange(int(self.distances.max()) + 1, dtype=float) if len(self.distances) else np.zeros(1)
        vals = np.zeros_like(grid)
        for d, v in zip(self.distances, self.values):
            vals[int(d)] = v
        vals = np.maximum.accumulate(vals[::-1])[::-1]
        return DecayFunction.tabulated(grid, vals, tail=0.0)


def default_probe_regions(G: MetricSpace, volume: Iterable, max_support: int = 2) -> list[tuple]:
    vol = sorted(volume)
    regions = [(x,) for x in vol]
    if max_support >= 2:
        regions += [tuple(sorted((x, y))) for x, y in itertools.combinations(vol, 2) if G.d(x, y) == 1]
    return regions


def estimate_decay(K: QuasiLocalMap, G: MetricSpace, regions: Iterable[tuple] | None = None,
                   q: float | None = None, max_support: int = 1) -> EmpiricalDecay:
    """``G_emp(d) = max ||[K(A), B]|| / |X|^q`` over Pauli probes at distance ``d``.

    ``A`` runs over the Pauli strings on each probe region ``X`` and ``B`` over
    single-site Paulis outside ``X``; the table is made non-increasing by a
    running maximum from the far end.
    """
    q = K.params.q if q is None else q
    regions = default_probe_regions(G, K.volume, max_support) if regions is None else [tuple(sorted(r)) for r in regions]
    top = int(math.ceil(G.diameter(K.volume)))
    raw = np.zeros(top + 1)
    singles = {}
    for y in K.volume:
        for c in "XYZ":
            singles[(y, c)] = embed(algebra.product_operator({y: PAULI[c]}), K.volume, K.dim_map).matrix
    for X in regions:
        outside = [y for y in K.volume if y not in X]
        if not outside:
            continue
        for A in _pauli_basis(X):
            KA = K(A).matrix
            for y in outside:
                d = int(round(G.set_distance(X, [y])))
                for c in "XYZ":
                    Bm = singles[(y, c)]
                    val = opnorm(KA @ Bm - Bm @ KA) / len(X) ** q
                    if val > raw[d]:
                        raw[d] = val
    values = np.maximum.accumulate(raw[::-1])[::-1]
    return EmpiricalDecay(np.arange(top + 1, dtype=float), values, raw, q, max(len(r) for r in regions))


# local approximation ------------------------------------------------------------------

@dataclass
class LocalApprox:
    approx: LocalOperator
    error: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.error <= self.bound + 1e-12


def local_approx(K: QuasiLocalMap, A: LocalOperator, X: Iterable, n: int, rho: ProductState,
                 G: MetricSpace, strict: bool = True) -> LocalApprox:
    """``Pi_{X(n)}(K(A))`` with its measured error against ``2 C |X|^q ||A|| G(n)``."""
    X = tuple(sorted(X))
    KA = K(A)
    region = set(G.inflate(X, n)) & set(K.volume)
    approx = algebra.conditional_expectation(KA, region, rho)
    error = opnorm(KA.matrix - approx.matrix)
    bound = 2.0 * K.params.commutator_bound(len(X), n, opnorm(A))
    out = LocalApprox(approx, error, bound)
    if strict and not out.passed:
        raise AuditFailure(f"local approximation error {error} exceeds {bound} at n={n}",
                           AuditRecord("local_approx", error, bound, 1e-12, {"n": n}))
    return out


@dataclass
class ShellSeries:
    shells: list
    norms: list
    bounds: list
    residual: float

    def records(self) -> list[AuditRecord]:
        return [AuditRecord("shell", nrm, b, 1e-12, {"n": n})
                for n, (nrm, b) in enumerate(zip(self.norms, self.bounds)) if n >= 1]


def shell_series(K: QuasiLocalMap, A: LocalOperator, X: Iterable, rho: ProductState, G: MetricSpace) -> ShellSeries:
    """Shells ``Delta_{X(n)}(K(A))`` until ``X(n)`` covers the volume, with the shell-norm bounds."""
    X = tuple(sorted(X))
    KA = K(A)
    vol = set(K.volume)
    shells, norms, bounds = [], [], []
    n = 0
    total = np.zeros_like(KA.matrix)
    while True:
        Dn = local_decomposition(KA, X, n, rho, G)
        shells.append(Dn)
        norms.append(opnorm(Dn))
        bounds.append(0.0 if n == 0 else 4.0 * K.params.commutator_bound(len(X), n - 1, opnorm(A)))
        total += Dn.matrix
        if set(G.inflate(X, n)) >= vol:
            break
        n += 1
    return ShellSeries(shells, norms, bounds, float(np.abs(total - KA.matrix).max()))


# composition calculators --------------------------------------------------------------------

def composition_bound(inner: QLParams, outer: QLParams, mode: str = "outer_bounded",
                      nu: float = 1.0, kappa: float = 1.0, outer_norm: float | None = None) -> QLParams:
    """Declared parameters of ``outer o inner``.

    ``outer_bounded`` treats the outer map as bounded with norm ``outer_norm``
    (default ``outer.B``); ``general`` uses the shell-series composition and
    needs the ``nu p2``-th moment of the inner decay function.
    """
    G1, G2 = inner.G, outer.G
    zero = DecayFunction.from_callable(lambda r: np.zeros_like(r), "zero", allow_zero=True)
    G1 = zero if G1 is None else G1
    G2 = zero if G2 is None else G2
    q2 = outer.q
    if mode == "outer_bounded":
        norm2 = outer.B if outer_norm is None else outer_norm
        if outer.p != 0 and outer_norm is None:
            raise PreconditionError("outer map must be bounded (p = 0) or pass outer_norm")
        C = max(kappa**q2 * inner.B * outer.C, 4.0 * inner.C * norm2)

        def fn(r):
            r = np.asarray(r, dtype=float)
            return (r / 2) ** (q2 * nu) * G2(r / 2) + G1(r / 2)

        Gt = DecayFunction(fn, "composed", label=f"comp({G1.label},{G2.label})", allow_zero=True)
        return QLParams(inner.B * norm2, inner.p, C, inner.p + q2, Gt)
    if mode != "general":
        raise DomainError(f"unknown composition mode {mode!r}")
    p2 = outer.p
    try:
        m1 = moment(G1, nu * p2, 0.0)
    except DivergenceError as exc:
        raise PreconditionError(f"inner decay has no finite {nu * p2:g}-th moment") from exc
    Bt = outer.B * (inner.B + 4.0 * inner.C * kappa**p2 * m1)
    C = max(kappa**q2 * inner.B * outer.C, 8.0 * kappa**p2 * inner.C * outer.B)
    q = max(inner.p, inner.q) + max(p2, q2)

    def fn(r):
        r = np.asarray(r, dtype=float)
        tails = np.vectorize(lambda x: moment(G1, nu * p2, math.floor(x / 2)))(r)
        return (r / 2) ** (q2 * nu) * G2(r / 2) + tails

    Gt = DecayFunction(fn, "composed", label=f"comp_general({G1.label},{G2.label})", allow_zero=True)
    return QLParams(Bt, p2 + max(inner.p, inner.q), C, q, Gt)


def composed_shell_map(K1: QuasiLocalMap, K2: QuasiLocalMap, A: LocalOperator, X: Iterable,
                       rho: ProductState, G: MetricSpace) -> LocalOperator:
    """``sum_n K2(Delta_{X(n)}(K1(A)))`` over the finite shell series."""
    series = shell_series(K1, A, X, rho, G)
    total = np.zeros_like(series.shells[0].matrix)
    for D in series.shells:
        total += K2(D).matrix
    return LocalOperator(K1.volume, total, K1.dims)


def rho_independence_audit(K1: QuasiLocalMap, K2: QuasiLocalMap, A: LocalOperator, X: Iterable,
                           rho_a: ProductState, rho_b: ProductState, G: MetricSpace) -> float:
    """Largest entry difference between the shell compositions assembled with two states."""
    Ka = composed_shell_map(K1, K2, A, X, rho_a, G).matrix
    Kb = composed_shell_map(K1, K2, A, X, rho_b, G).matrix
    return float(np.abs(Ka - Kb).max())


# transformed interactions ----------------------------------------------------------------------

@dataclass
class TransformedInteraction:
    psi: Interaction
    terms: dict
    source_map: str
    source_interaction: str
    rho: ProductState
    residual: float
    volume: tuple
    t: float = 0.0

    def total(self) -> np.ndarray:
        D = int(np.prod(algebra._dims_for(self.volume, self.psi.dims_map())))
        out = np.zeros((D, D), dtype=complex)
        for Z, op in self.terms.items():
            out += embed(op, self.volume).matrix
        return out


def transform_interaction(K, Phi: Interaction, volume: Iterable, rho: ProductState, G: MetricSpace,
                          t: float = 0.0, tol: float = 1e-10, drop: float = 0.0) -> TransformedInteraction:
    """``Psi(Z) = sum_n sum_{X: X(n) cap volume = Z} Delta_{X(n)}(K(Phi(X)))``.

    ``K`` is a :class:`QuasiLocalMap` or a callable ``t -> QuasiLocalMap``.
    Shells with operator norm at most ``drop`` are not stored.  The sum of all
    terms is checked against ``K(H_volume)``.
    """
    vol = tuple(sorted(volume))
    vs = set(vol)
    Kt = K if isinstance(K, QuasiLocalMap) else K(t)
    terms: dict = {}
    dm = {**Phi.dims_map(), **Kt.dim_map}
    for X in Phi.supports():
        if not set(X) <= vs:
            continue
        KA = Kt(Phi.term(X, t))
        n = 0
        while True:
            Z = tuple(sorted(set(G.inflate(X, n)) & vs)) if n else X
            Dn = local_decomposition(KA, X, n, rho, G, restrict=True)
            if Dn.support != Z:
                Dn = embed(Dn, Z, dm)
            if drop <= 0 or opnorm(Dn) > drop:
                if Z in terms:
                    terms[Z] = LocalOperator(Z, terms[Z].matrix + Dn.matrix, Dn.dims)
                else:
                    terms[Z] = Dn
            if set(Z) >= vs:
                break
            n += 1
    H = hamiltonian(Phi, vol, t)
    target = Kt(H).matrix
    total = np.zeros_like(target)
    for Z, op in terms.items():
        total += embed(op, vol, dm).matrix
    residual = float(np.abs(total - target).max()) if total.size else 0.0
    if residual > tol:
        raise AuditFailure(f"reconstruction residual {residual} exceeds {tol}",
                           AuditRecord("reconstruction", residual, tol))
    check = Kt.adjoint_compatible
    psi_terms = []
    for Z in sorted(terms, key=lambda z: (len(z), z)):
        M = terms[Z].matrix
        if check:
            M = (M + M.conj().T) / 2
        psi_terms.append((Z, M, 1.0))
    psi = Interaction.from_terms(psi_terms, name=f"{Kt.name}({Phi.name})", dims=dm, check=False)
    return TransformedInteraction(psi, terms, Kt.name, Phi.name, rho, residual, vol, t)


def transform_decay_audit(Psi: TransformedInteraction, Phi: Interaction, F: DecayFunction, G: MetricSpace,
                          params: QLParams, t: float | None = None, nu: float | None = None,
                          kappa: float | None = None, tol: float = 1e-12) -> list[AuditRecord]:
    """Pair sums of the transformed terms against ``C1 F(d/3) + C2 M^G_{nu+1}(floor(d/3))``."""
    t = Psi.t if t is None else t
    if nu is None:
        if G.dim is None:
            raise PreconditionError("nu is required for spaces without a box dimension")
        nu = float(G.dim)
    if kappa is None:
        kappa = regularity_audit(G, nu).kappa
    Gk = params.G
    if params.C > 0 and Gk is None:
        raise PreconditionError("declared decay function missing")
    try:
        m2 = moment(Gk, 2 * nu + 1, 0.0) if params.C > 0 else 0.0
    except DivergenceError as exc:
        raise PreconditionError("decay function lacks a finite 2nu+1 moment") from exc
    phi_p = f_norm(Phi.moment(params.p), F, G, t).f_norm
    phi_q = f_norm(Phi.moment(params.q), F, G, t).f_norm
    normF = f_constants(F, G).uniform_norm
    C1 = params.B * phi_p + 4 * kappa**2 * params.C * phi_q * m2
    C2 = 4 * kappa * normF * params.C * phi_q
    S = pair_sums(Psi.psi, G, 0.0)
    vol = G.indices(Psi.volume)
    records = []
    for i in vol:
        for j in vol:
            d = float(G.dist[i, j])
            tail = moment(Gk, nu + 1, math.floor(d / 3)) if params.C > 0 else 0.0
            rhs = C1 * float(F(d / 3)) + C2 * tail
            records.append(AuditRecord("transform_decay", float(S[i, j]), rhs, tol * max(1.0, rhs),
                                       {"x": G.sites[i], "y": G.sites[j], "d": d}))
    return records


# difference of dynamics ------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffDynamicsBound:
    value: float
    first: float
    second: float
    I_diff: float
    C1: float
    C2: float
    G: float


def diff_dynamics_ql_bound(Phi: Interaction, Psi: Interaction, F: DecayFunction, G: MetricSpace,
                           X: Iterable, Y: Iterable, s: float, t: float, volume: Iterable | None = None,
                           nu: float | None = None, kappa: float | None = None) -> DiffDynamicsBound:
    """Commutator bound for the difference of two dynamics, unit-norm observables.

    The middle decay term uses the inflation ``X(3R/4)``; see the package notes.
    """
    X, Y = tuple(sorted(X)), tuple(sorted(Y))
    vol = tuple(sorted(volume if volume is not None else G.sites))
    if nu is None:
        if G.dim is None:
            raise PreconditionError("nu is required for spaces without a box dimension")
        nu = float(G.dim)
    if kappa is None:
        kappa = regularity_audit(G, nu).kappa
    try:
        tail0 = moment(F, 2 * nu, 0.0)
    except DivergenceError as exc:
        raise PreconditionError("F lacks a finite 2nu moment") from exc
    del tail0
    consts = f_constants(F, G)
    CF, normF = consts.conv_constant, consts.uniform_norm
    I_phi = its_integral(Phi, F, G, s, t, conv_constant=CF)
    I_psi = its_integral(Psi, F, G, s, t, conv_constant=CF)
    I_diff = its_integral(Phi - Psi, F, G, s, t, conv_constant=CF)
    C1 = math.exp(2 * min(I_phi, I_psi))
    C2 = (C1 - 1.0) * (1.0 + 5.0 * normF / CF) + kappa**2
    first = C1 * normF * len(X)
    R = G.set_distance(X, Y)
    if R > 0:
        XR2 = G.inflate(X, R / 2) & set(vol)
        rest = [z for z in vol if z not in XR2]
        X34 = G.inflate(X, 3 * R / 4) & set(vol)
        GR = ((1 + len(XR2)) * boundary_sum(F, G, X, rest)
              + len(XR2) * boundary_sum(F, G, X34, Y)
              + len(XR2) * moment(F, 2 * nu, math.floor(R / 4)))
        second = C2 * GR
    else:
        GR, second = math.inf, math.inf
    pref = 4.0 / CF * I_diff
    return DiffDynamicsBound(pref * min(first, second), pref * first, pref * second, I_diff, C1, C2, GR)


def diff_dynamics_audit(Phi: Interaction, Psi: Interaction, F: DecayFunction, G: MetricSpace,
                        A: LocalOperator, B: LocalOperator, s: float, t: float,
                        volume: Iterable | None = None, nu: float | None = None,
                        kappa: float | None = None, tol: float = 1e-10) -> AuditRecord:
    """Exact ``||[(tau - alpha)(A), B]||`` against :func:`diff_dynamics_ql_bound`."""
    vol = tuple(sorted(volume if volume is not None else G.sites))
    dm = {**Phi.dims_map(), **Psi.dims_map()}
    Ae, Be = embed(A, vol, dm).matrix, embed(B, vol, dm).matrix
    K1 = QuasiLocalMap.from_dynamics(Phi, F, G, vol, s, t)
    K2 = QuasiLocalMap.from_dynamics(Psi, F, G, vol, s, t)
    KA = K1.fn(Ae) - K2.fn(Ae)
    exact = opnorm(KA @ Be - Be @ KA)
    b = diff_dynamics_ql_bound(Phi, Psi, F, G, A.support, B.support, s, t, vol, nu, kappa)
    return AuditRecord("diff_dynamics", exact, opnorm(A) * opnorm(B) * b.value, tol,
                       {"first": b.first, "second": b.second, "R": G.set_distance(A.support, B.support)})


__all__ = [
    "QLParams", "QuasiLocalMap", "EmpiricalDecay", "estimate_decay", "default_probe_regions",
    "LocalApprox", "local_approx", "ShellSeries", "shell_series", "composition_bound",
    "composed_shell_map", "rho_independence_audit", "TransformedInteraction", "transform_interaction",
    "transform_decay_audit", "DiffDynamicsBound", "diff_dynamics_ql_bound", "diff_dynamics_audit",
    "partial_expectation",
]
