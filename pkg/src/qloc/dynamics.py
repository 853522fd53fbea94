"""Propagators, Heisenberg evolution, generators and Lieb-Robinson audits.

Propagators solve ``dU/dt = -i H(t) U`` with ``U(s, s) = 1`` on a closed
uniform time grid.  The Heisenberg dynamics is ``tau_{t,s}(A) = U(t,s)* A U(t,s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import algebra
from .algebra import LocalOperator, embed, eigh, opnorm, polar_unitary
from .audit import AuditRecord
from .decay import DecayFunction, f_constants
from .errors import (AuditFailure, ConfigurationError, ConvergenceError, GridError,
                     PreconditionError)
from .interactions import Interaction, hamiltonian, its_integral, phi_boundary, sup_f_norm
from .lattice import MetricSpace

METHODS = ("auto", "eig_const", "rk4", "dyson", "interaction_picture")


def time_grid(s: float, t: float, nodes: int) -> np.ndarray:
    if nodes < 2:
        raise ConfigurationError("a time grid needs at least two nodes")
    return np.linspace(s, t, nodes)


def _defect(U: np.ndarray) -> float:
    return float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2))


# one-interval integrators ---------------------------------------------------------

def _rk4(Hfun: Callable[[float], np.ndarray], a: float, b: float, n: int) -> np.ndarray:
    """Classical rk4 for ``dW/dt = -i H(t) W`` on ``[a, b]`` from ``W(a) = 1`` with ``n`` steps."""
    D = Hfun(a).shape[0]
    W = np.eye(D, dtype=complex)
    h = (b - a) / n
    for k in range(n):
        t = a + k * h
        Ha, Hm, Hb = Hfun(t), Hfun(t + h / 2), Hfun(t + h)
        k1 = -1j * (Ha @ W)
        k2 = -1j * (Hm @ (W + (h / 2) * k1))
        k3 = -1j * (Hm @ (W + (h / 2) * k2))
        k4 = -1j * (Hb @ (W + h * k3))
        W = W + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return W


def _rk4_adaptive(Hfun, a: float, b: float, norm_bound: float, tol: float,
                  max_doublings: int = 10) -> tuple[np.ndarray, int]:
    """rk4 with step doubling until the unitarity defect and the doubling difference are below ``tol``."""
    if a == b:
        return np.eye(Hfun(a).shape[0], dtype=complex), 0
    n = max(1, math.ceil(abs(b - a) * norm_bound / 0.05))
    W = _rk4(Hfun, a, b, n)
    for _ in range(max_doublings):
        W2 = _rk4(Hfun, a, b, 2 * n)
        if np.abs(W2 - W).max() <= tol and _defect(W2) <= tol:
            return W2, 2 * n
        W, n = W2, 2 * n
    raise ConvergenceError(f"rk4 missed tolerance {tol} on [{a}, {b}] with {n} steps")


class _ChebyshevPicard:
    """Truncated Dyson series by Picard iteration on Chebyshev-Lobatto nodes."""

    def __init__(self, nodes: int = 24):
        x = -np.cos(np.pi * np.arange(nodes) / (nodes - 1))
        V = cheb.chebvander(x, nodes - 1)
        integ = np.zeros((nodes, nodes))
        for k in range(nodes):
            coef = np.zeros(nodes)
            coef[k] = 1.0
            integ[:, k] = cheb.chebval(x, cheb.chebint(coef, lbnd=-1.0))
        self.x = x
        self.S = integ @ np.linalg.inv(V)

    def __call__(self, Hfun, a: float, b: float, order: int) -> np.ndarray:
        tau = a + (b - a) * (self.x + 1) / 2
        Hs = np.stack([Hfun(float(r)) for r in tau])
        D = Hs.shape[1]
        eye = np.eye(D, dtype=complex)
        Y = np.broadcast_to(eye, Hs.shape).copy()
        scale = -1j * (b - a) / 2
        for _ in range(order):
            HY = Hs @ Y
            Y = eye + scale * np.tensordot(self.S, HY, axes=(1, 0))
        return Y[-1]


_PICARD = _ChebyshevPicard()


def dyson_remainder(integrated_norm: float, order: int) -> float:
    """Factorial bound on the Dyson terms beyond ``order``."""
    x = integrated_norm
    term = x ** (order + 1) / math.factorial(order + 1)
    return term * math.exp(x)


# propagator ---------------------------------------------------------------

@dataclass
class Propagator:
    """Unitaries ``U(t_k, t_0)`` on a closed uniform grid plus integrity residuals."""

    volume: tuple
    dims: tuple
    times: np.ndarray
    method: str
    U: np.ndarray
    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    substeps: list = field(default_factory=list)
    _direct: Callable | None = field(default=None, repr=False)

    def node(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise GridError(f"time {t} is not a grid node")
        return k

    def __call__(self, t: float, s: float | None = None) -> np.ndarray:
        """``U(t, s)`` for grid nodes ``t`` and ``s`` (default: the first node)."""
        j = self.node(t)
        if s is None:
            return self.U[j]
        i = self.node(s)
        return self.U[j] @ self.U[i].conj().T

    def direct(self, t: float, s: float, tol: float | None = None) -> np.ndarray:
        """``U(t, s)`` integrated afresh over ``[s, t]`` as one span."""
        if tol is None:
            return self._direct(s, t)
        return self._direct(s, t, tol)


def _hamiltonian_fn(Phi: Interaction, volume, onsite, dims):
    vol = tuple(sorted(volume))
    dm = {**Phi.dims_map(), **(dims or {})}
    parts = Phi.embedded_parts(vol, dm)
    total = int(np.prod(algebra._dims_for(vol, dm), dtype=np.int64))
    H0 = np.zeros((total, total), dtype=complex)
    if onsite:
        for s, h in onsite.items():
            if s in vol:
                H0 += embed(LocalOperator((s,), h, (np.shape(h)[0],)), vol, dm).matrix

    # entries sharing a schedule object are summed once
    groups: dict = {}
    for sched, M in parts:
        key = id(sched)
        if key in groups:
            groups[key][1] += M
        else:
            groups[key] = [sched, M.copy()]
    scheds = [g[0] for g in groups.values()]
    stack = np.array([g[1] for g in groups.values()]) if groups else np.zeros((0, total, total), complex)
    cache: dict = {}

    def Hphi(t):
        hit = cache.get(t)
        if hit is None:
            coef = np.array([sc(t) for sc in scheds], dtype=float)
            hit = np.tensordot(coef, stack, axes=(0, 0)) if len(coef) else np.zeros((total, total), complex)
            if len(cache) > 20000:
                cache.clear()
            cache[t] = hit
        return hit

    return vol, algebra._dims_for(vol, dm), H0, Hphi


def _norm_bound(Hfun, a, b, samples=5) -> float:
    return max(opnorm(Hfun(float(r))) for r in np.linspace(a, b, samples)) + 1e-12


def propagator(Phi: Interaction, volume: Iterable, s: float = 0.0, t: float = 1.0, nodes: int = 21,
               method: str = "auto", onsite: Mapping | None = None, dyson_order: int = 12,
               tol_step: float = 1e-10, tol_unitary: float = 1e-8, tol_cocycle: float = 1e-7,
               times: np.ndarray | None = None, dims: Mapping | None = None,
               check: bool = True) -> Propagator:
    """Propagator of ``H(t) = sum onsite + sum_Z Phi(Z, t)`` on ``volume`` over a uniform grid.

    With ``check=False`` the integrity residuals are not computed and no
    tolerance is enforced.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "dyson" and dyson_order < 1:
        raise ConfigurationError("dyson order must be at least 1")
    times = time_grid(s, t, nodes) if times is None else np.asarray(times, dtype=float)
    vol, dvec, H0, Hphi = _hamiltonian_fn(Phi, volume, onsite, dims)
    if method == "auto":
        method = "eig_const" if Phi.is_constant else "rk4"
    if method == "eig_const" and not Phi.is_constant:
        raise PreconditionError("eig_const needs a time-independent interaction")

    Hfull = Hphi if not onsite else (lambda r: H0 + Hphi(r))
    for r in (times[0], times[len(times) // 2], times[-1]):
        algebra.check_hermitian(Hfull(float(r)), 1e-10, "Hamiltonian")

    substeps: list = []
    if method == "eig_const":
        E, V = eigh(Hfull(0.0))

        def direct(a, b, tol=None):
            return (V * np.exp(-1j * (b - a) * E)) @ V.conj().T

    elif method == "rk4":
        nb = _norm_bound(Hfull, times[0], times[-1])

        def direct(a, b, tol=tol_step):
            W, n = _rk4_adaptive(Hfull, a, b, nb, tol)
            substeps.append(n)
            return polar_unitary(W)

    elif method == "dyson":
        nb = _norm_bound(Hfull, times[0], times[-1])

        def direct(a, b, tol=tol_step):
            pieces = 1
            while dyson_remainder(nb * abs(b - a) / pieces, dyson_order) > tol:
                pieces *= 2
                if pieces > 2**16:
                    raise ConvergenceError("Dyson remainder does not shrink")
            substeps.append(pieces)
            edges = np.linspace(a, b, pieces + 1)
            W = np.eye(H0.shape[0], dtype=complex)
            for lo, hi in zip(edges[:-1], edges[1:]):
                W = _PICARD(Hfull, float(lo), float(hi), dyson_order) @ W
            return W

    else:
        E0, V0 = eigh(H0)

        def rot(r):
            return (V0 * np.exp(-1j * r * E0)) @ V0.conj().T

        def Htwist(r):
            R = rot(r)
            return R.conj().T @ Hphi(r) @ R

        nb = _norm_bound(Hphi, times[0], times[-1])

        def direct(a, b, tol=tol_step):
            W, n = _rk4_adaptive(Htwist, a, b, nb, tol)
            substeps.append(n)
            return rot(b) @ polar_unitary(W) @ rot(a).conj().T

    D = H0.shape[0]
    U = np.empty((len(times), D, D), dtype=complex)
    U[0] = np.eye(D)
    for k in range(1, len(times)):
        U[k] = direct(float(times[k - 1]), float(times[k])) @ U[k - 1]
        if method in ("rk4", "interaction_picture"):
            U[k] = polar_unitary(U[k])

    P = Propagator(vol, dvec, times, method, U,
                   tolerances={"step": tol_step, "unitary": tol_unitary, "cocycle": tol_cocycle},
                   substeps=substeps, _direct=direct)
    if not check:
        return P
    P.residuals = integrity_residuals(P)
    if P.residuals["unitarity"] > tol_unitary or P.residuals["cocycle"] > tol_cocycle:
        raise ConvergenceError(f"propagator residuals {P.residuals} exceed tolerances")
    return P


def integrity_residuals(P: Propagator) -> dict:
    """Unitarity, cocycle and inverse residuals.

    The cocycle check compares ``U(t, s) U(s, r)`` from the grid with ``U(t, r)``
    integrated afresh over ``[r, t]`` for the triples (start, middle, end) and
    the two half-grid triples; the inverse check integrates backwards.
    """
    unit = max(_defect(u) for u in P.U)
    K = len(P.times) - 1
    span_tol = P.tolerances.get("cocycle", 1e-7) / 10
    triples = {(0, K // 2, K), (0, K // 4, K // 2), (K // 2, (3 * K) // 4, K)}
    cocycle = 0.0
    for i, j, k in sorted(triples):
        if not i < j < k:
            continue
        r, s, t = (float(P.times[m]) for m in (i, j, k))
        lhs = P.direct(t, r, span_tol)
        cocycle = max(cocycle, float(np.linalg.norm(lhs - P(t, s) @ P(s, r), 2)))
    t0, t1 = float(P.times[0]), float(P.times[-1])
    if K < 2:
        cocycle = float(np.linalg.norm(P.direct(t1, t0, span_tol) - P.U[-1], 2))
    inverse = float(np.linalg.norm(P(t1, t0).conj().T - P.direct(t0, t1, span_tol), 2))
    return {"unitarity": unit, "cocycle": cocycle, "inverse": inverse}


# Heisenberg picture -------------------------------------------------------------

def _on_volume(A: LocalOperator, P_or_vol, dims=None) -> LocalOperator:
    vol = P_or_vol.volume if isinstance(P_or_vol, Propagator) else tuple(sorted(P_or_vol))
    return embed(A, vol, dims if dims is not None else A.dim_map)


def heisenberg(A: LocalOperator, U: Propagator, t: float, s: float) -> LocalOperator:
    """``tau_{t,s}(A) = U(t,s)* A U(t,s)`` on the propagator's volume."""
    Ae = _on_volume(A, U)
    W = U(t, s)
    return LocalOperator(Ae.support, W.conj().T @ Ae.matrix @ W, Ae.dims)


def generator(Phi: Interaction, volume: Iterable, t: float, A: LocalOperator,
              onsite: Mapping | None = None) -> LocalOperator:
    """``delta_t(A) = [H_volume(t), A]``, i.e. the sum of ``[Phi(Z, t), A]`` over ``Z`` inside the volume."""
    H = hamiltonian(Phi, volume, t, onsite)
    Ae = embed(A, H.support, {**Phi.dims_map(), **A.dim_map})
    return LocalOperator(H.support, H.matrix @ Ae.matrix - Ae.matrix @ H.matrix, H.dims)


def _simpson(values: np.ndarray, h: float) -> np.ndarray:
    n = len(values) - 1
    if n % 2:
        raise ConfigurationError("Simpson quadrature needs an odd number of nodes")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (h / 3.0) * np.tensordot(w, values, axes=(0, 0))


@dataclass
class DuhamelResult:
    derivative: LocalOperator
    norm: float
    bound: float


def duhamel_derivative(family: Callable[[float], Interaction], family_derivative: Callable[[float], Interaction] | None,
                       volume: Iterable, s: float, t: float, lam: float, nodes: int = 201,
                       method: str = "auto") -> DuhamelResult:
    """``dU_lam(t, s)/dlam = -i int_s^t U(t, r) H'_lam(r) U(r, s) dr`` by composite Simpson on the grid."""
    if family_derivative is None:
        raise ConfigurationError("the parameter derivative of the family is required")
    Phi = family(lam)
    dPhi = family_derivative(lam)
    P = propagator(Phi, volume, s, t, nodes=nodes, method=method)
    vol = P.volume
    vals = []
    norms = []
    for k, r in enumerate(P.times):
        Hd = hamiltonian(dPhi, vol, float(r)).matrix
        norms.append(opnorm(Hd))
        # U(t, r) Hd U(r, s) = U_K U_k^* Hd U_k
        vals.append(P.U[-1] @ P.U[k].conj().T @ Hd @ P.U[k])
    h = (t - s) / (nodes - 1)
    dU = -1j * _simpson(np.array(vals), h)
    bound = abs(float(_simpson(np.array(norms), abs(h))))
    return DuhamelResult(LocalOperator(vol, dU, P.dims), opnorm(dU), bound)


# Lieb-Robinson bound --------------------------------------------------------------

@dataclass(frozen=True)
class LRBound:
    value: float
    D: float
    I: float
    conv_constant: float
    velocity_value: float | None = None
    velocity: float | None = None


def boundary_sum(F: DecayFunction, G: MetricSpace, X: Iterable, Y: Iterable) -> float:
    """``sum_{x in X} sum_{y in Y} F(d(x, y))``."""
    ix, iy = G.indices(X), G.indices(Y)
    if len(ix) == 0 or len(iy) == 0:
        return 0.0
    return float(np.asarray(F(G.dist[np.ix_(ix, iy)])).sum())


def lr_bound(Phi: Interaction, F: DecayFunction, G: MetricSpace, X: Iterable, Y: Iterable,
             s: float, t: float, base: DecayFunction | None = None, rate: float | None = None,
             tol: float = 1e-9) -> LRBound:
    """Commutator bound for unit-norm observables on disjoint ``X`` and ``Y``.

    With ``base`` and ``rate`` (``F = exp(-rate r) base``) the velocity form is
    returned as well.
    """
    X, Y = frozenset(X), frozenset(Y)
    if X & Y:
        raise PreconditionError("X and Y must be disjoint")
    CF = f_constants(F, G).conv_constant
    I = its_integral(Phi, F, G, s, t, tol=tol, conv_constant=CF)
    bX = phi_boundary(Phi, X).boundary
    bY = phi_boundary(Phi, Y).boundary
    D = min(boundary_sum(F, G, X, bY), boundary_sum(F, G, bX, Y))
    value = 2.0 / CF * math.expm1(2.0 * I) * D
    if base is None or rate is None:
        return LRBound(value, D, I, CF)
    if rate <= 0:
        raise PreconditionError("rate must be positive")
    v = 2.0 / rate * CF * sup_f_norm(Phi, F, G, s, t)
    norm0 = f_constants(base, G).uniform_norm
    dXY = G.set_distance(X, Y)
    vel = 2.0 * norm0 / CF * min(len(bX), len(bY)) * math.exp(rate * (v * abs(t - s) - dXY))
    return LRBound(value, D, I, CF, vel, v)


@dataclass
class LRBoundReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def table(self) -> list[dict]:
        return [r.row() for r in self.rows]


class _EigenEvolution:
    """``tau_t(A) B - B tau_t(A)`` norms for a constant Hamiltonian, in its eigenbasis.

    For Hermitian ``A`` and ``B`` on large volumes the norm of the Hermitian
    operator ``i[tau_t(A), B]`` comes from Lanczos on matrix-vector products,
    which avoids forming the commutator; small or tiny cases go dense.
    """

    LANCZOS_DIM = 256

    def __init__(self, H: np.ndarray, A: np.ndarray, B: np.ndarray):
        E, V = eigh(H)
        self.E = E
        self.Ae = V.conj().T @ A @ V
        self.Be = V.conj().T @ B @ V
        self.hermitian = algebra.is_hermitian(A, 1e-12) and algebra.is_hermitian(B, 1e-12)

    def _dense(self, tA: np.ndarray) -> float:
        return opnorm(tA @ self.Be - self.Be @ tA)

    def commutator_norm(self, t: float) -> float:
        ph = np.exp(1j * t * self.E)
        tA = ph[:, None] * self.Ae * ph.conj()[None, :]
        D = len(self.E)
        if not self.hermitian or D < self.LANCZOS_DIM:
            return self._dense(tA)
        Be = self.Be
        op = LinearOperator((D, D), matvec=lambda v: 1j * (tA @ (Be @ v) - Be @ (tA @ v)), dtype=complex)
        try:
            val = float(abs(eigsh(op, k=1, which="LM", v0=np.ones(D, dtype=complex), tol=1e-10,
                                  return_eigenvectors=False)[0]))
        except ArpackNoConvergence:
            return self._dense(tA)
        return val


def lr_audit(Phi: Interaction, F: DecayFunction, G: MetricSpace, A: LocalOperator, B: LocalOperator,
             times: np.ndarray, volume: Iterable | None = None, base: DecayFunction | None = None,
             rate: float | None = None, propagator_: Propagator | None = None, tol: float = 1e-6,
             strict: bool = False) -> LRBoundReport:
    """Exact ``||[tau_{t,s}(A), B]||`` on each node against ``min(2||A|| ||B||, bound)``."""
    if set(A.support) & set(B.support):
        raise PreconditionError("A and B must have disjoint supports")
    vol = tuple(sorted(volume if volume is not None else G.sites))
    times = np.asarray(times, dtype=float)
    s = float(times[0])
    nA, nB = opnorm(A), opnorm(B)
    dm = {**Phi.dims_map(), **A.dim_map, **B.dim_map}
    Ae, Be = embed(A, vol, dm).matrix, embed(B, vol, dm).matrix
    if propagator_ is None and Phi.is_constant:
        ev = _EigenEvolution(hamiltonian(Phi, vol, s).matrix, Ae, Be)
        exact_at = lambda t: ev.commutator_norm(t - s)
    else:
        P = propagator_ or propagator(Phi, vol, times=times)

        def exact_at(t):
            W = P(t, s)
            tA = W.conj().T @ Ae @ W
            return opnorm(tA @ Be - Be @ tA)

    rows = []
    for t in times:
        t = float(t)
        exact = exact_at(t)
        lb = lr_bound(Phi, F, G, A.support, B.support, s, t, base=base, rate=rate)
        cap = 2.0 * nA * nB
        bound = nA * nB * lb.value
        detail = {"t": t, "bound": bound, "trivial": cap}
        if lb.velocity_value is not None:
            detail["velocity_bound"] = nA * nB * lb.velocity_value
            detail["velocity"] = lb.velocity
        rows.append(AuditRecord("lieb_robinson", exact, min(cap, bound), tol, detail))
    report = LRBoundReport(rows)
    if strict and not report.passed:
        bad = next(r for r in rows if not r.passed)
        raise AuditFailure(f"Lieb-Robinson bound violated at t={bad.detail['t']}", bad)
    return report


# continuity ---------------------------------------------------------------------

def _evolve_const_or_grid(Phi, vol, A_mat, s, t):
    if Phi.is_constant:
        H = hamiltonian(Phi, vol, s).matrix
        W = algebra.unitary_exp(H, t - s)
    else:
        W = propagator(Phi, vol, s, t, nodes=max(3, int(abs(t - s) / 0.05) + 1))(t, s)
    return W.conj().T @ A_mat @ W


def dynamics_difference_audit(Phi: Interaction, Psi: Interaction, F: DecayFunction, G: MetricSpace,
                              volume: Iterable, subvolume: Iterable, A: LocalOperator,
                              s: float, t: float) -> list[AuditRecord]:
    """Exact differences of two dynamics and of two volumes against the continuity bounds.

    Returns two records: ``interaction`` compares ``tau^Phi`` with ``tau^Psi`` on
    ``volume``; ``volume`` compares ``tau^Phi`` on ``volume`` and on ``subvolume``.
    """
    vol = tuple(sorted(volume))
    sub = tuple(sorted(subvolume))
    X = A.support
    if not set(X) <= set(sub) or not set(sub) <= set(vol):
        raise PreconditionError("need support(A) within subvolume within volume")
    CF = f_constants(F, G).conv_constant
    nA = opnorm(A)
    dm = {**Phi.dims_map(), **Psi.dims_map(), **A.dim_map}
    Ae = embed(A, vol, dm).matrix

    tau = _evolve_const_or_grid(Phi, vol, Ae, s, t)
    alpha = _evolve_const_or_grid(Psi, vol, Ae, s, t)
    exact1 = opnorm(tau - alpha)
    I_phi = its_integral(Phi, F, G, s, t, conv_constant=CF)
    I_psi = its_integral(Psi, F, G, s, t, conv_constant=CF)
    I_diff = its_integral(Phi - Psi, F, G, s, t, conv_constant=CF)
    rhs1 = 2.0 * nA / CF * math.exp(2.0 * min(I_phi, I_psi)) * I_diff * boundary_sum(F, G, X, vol)

    tau_sub = _evolve_const_or_grid(Phi.restrict(sub), sub, embed(A, sub, dm).matrix, s, t)
    tau_sub = embed(LocalOperator(sub, tau_sub, algebra._dims_for(sub, dm)), vol, dm).matrix
    exact2 = opnorm(tau - tau_sub)
    rest = [x for x in vol if x not in set(sub)]
    rhs2 = 2.0 * nA / CF * math.exp(2.0 * I_phi) * I_phi * boundary_sum(F, G, X, rest)
    return [
        AuditRecord("interaction", exact1, rhs1, 1e-12, {"t": t, "I_diff": I_diff}),
        AuditRecord("volume", exact2, rhs2, 1e-12, {"t": t, "I": I_phi}),
    ]


def norm_preserving_ode_audit(Agen: Callable[[float], np.ndarray], Bsrc: Callable[[float], np.ndarray],
                              V0: np.ndarray, times: np.ndarray, substeps: int = 20,
                              tol: float = 1e-8) -> list[AuditRecord]:
    """Integrate ``dV/dt = -i[A(t), V] + B(t)`` by rk4 and check ``||V(t)|| <= ||V0|| + int ||B||``.

    Each record also carries the change of ``V`` under step halving.
    """
    times = np.asarray(times, dtype=float)
    for r in (times[0], times[-1]):
        algebra.check_hermitian(Agen(float(r)), 1e-10, "generator")

    def f(r, V):
        A = Agen(r)
        return -1j * (A @ V - V @ A) + Bsrc(r)

    def run(n):
        V = np.asarray(V0, dtype=complex).copy()
        out = [V]
        for a, b in zip(times[:-1], times[1:]):
            h = (b - a) / n
            for k in range(n):
                r = a + k * h
                k1 = f(r, V)
                k2 = f(r + h / 2, V + h / 2 * k1)
                k3 = f(r + h / 2, V + h / 2 * k2)
                k4 = f(r + h, V + h * k3)
                V = V + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            out.append(V)
        return out

    coarse, fine = run(substeps), run(2 * substeps)
    norm0 = opnorm(V0)
    fine_grid = np.linspace(times[0], times[-1], 2 * substeps * (len(times) - 1) + 1)
    bnorm = np.array([opnorm(Bsrc(float(r))) for r in fine_grid])
    h = fine_grid[1] - fine_grid[0] if len(fine_grid) > 1 else 0.0
    cum = np.concatenate([[0.0], np.cumsum((bnorm[1:] + bnorm[:-1]) * h / 2)])
    records = []
    for k, t in enumerate(times):
        j = k * 2 * substeps
        records.append(AuditRecord("norm_preserving", opnorm(fine[k]), norm0 + abs(cum[j]), tol,
                                   {"t": float(t), "halving_change": opnorm(fine[k] - coarse[k])}))
    return records


__all__ = [
    "Propagator", "propagator", "integrity_residuals", "heisenberg", "generator", "duhamel_derivative",
    "DuhamelResult", "LRBound", "lr_bound", "LRBoundReport", "lr_audit", "boundary_sum",
    "dynamics_difference_audit", "norm_preserving_ode_audit", "time_grid", "dyson_remainder",
]
