"""Weighted integrals of Heisenberg dynamics, the spectral-flow generator and its unitary flow.

Conventions: ``tau_t(A) = e^{itH} A e^{-itH}``.  In the eigenbasis of ``H`` the
entry ``(i, j)`` of ``tau_t(A)`` picks up ``e^{i t omega}`` with
``omega = E_i - E_j``, so every weighted integral is an entrywise multiplier.
The flow solves ``dU/ds = i D(s) U`` with ``U(0) = 1`` and
``alpha_s(A) = U(s)* A U(s)``; with this sign ``alpha_s(P(s)) = P(0)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import optimize

from . import algebra
from .algebra import LocalOperator, ProductState, opnorm, polar_unitary
from .audit import AuditRecord
from .decay import DecayFunction, Weight, f_constants
from .errors import ConvergenceError, DomainError, PreconditionError
from .interactions import Interaction, hamiltonian, hamiltonian_derivative, sup_f_norm
from .lattice import MetricSpace
from .quasilocal import QLParams, QuasiLocalMap, TransformedInteraction, transform_interaction
from .weightfn import WeightTables, constants, f_b

SMALL_OMEGA = 1e-7


def _tables(tables: WeightTables | None) -> WeightTables:
    return constants() if tables is None else tables


def _matrix(A) -> np.ndarray:
    return A.matrix if isinstance(A, LocalOperator) else np.asarray(A, dtype=complex)


# kernels -------------------------------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """Truncation ``|t| <= T`` with trapezoid step ``step``; ``None`` means the full band-limited rule."""

    T: float
    step: float

    def __post_init__(self):
        if not (self.T > 0 and self.step > 0):
            raise DomainError("cutoff T and step must be positive")


def _half_line_cos(omega: np.ndarray, gamma: float, cutoff: Cutoff, tables: WeightTables,
                   complement: bool = False) -> np.ndarray:
    """``int_0^T cos(omega t) w_gamma(t) dt`` by the trapezoid rule, or with ``1 - cos`` for ``complement``."""
    n = int(round(cutoff.T / cutoff.step))
    t = np.linspace(0.0, n * cutoff.step, n + 1)
    wt = np.asarray(tables.w(t, gamma))
    weights = np.full(t.shape, cutoff.step)
    weights[0] = weights[-1] = cutoff.step / 2
    out = np.empty(omega.shape)
    chunk = max(1, 4_000_000 // len(t))
    flat = omega.ravel()
    res = np.empty(flat.shape)
    for i in range(0, len(flat), chunk):
        phase = np.outer(flat[i:i + chunk], t)
        kernel = 2.0 * np.sin(phase / 2) ** 2 if complement else np.cos(phase)
        res[i:i + chunk] = kernel @ (weights * wt)
    out[...] = res.reshape(omega.shape)
    return out


def second_moment(tables: WeightTables, gamma: float = 1.0) -> float:
    """``int_R t^2 w_gamma(t) dt``; the band-limited trapezoid rule is exact for it."""
    t = tables.grid
    weights = np.full(t.shape, 2.0 * tables.grid_step)
    weights[0] = 0.0
    return float((weights * t**2 * tables.w_grid).sum()) / gamma**2


def first_abs_moment(tables: WeightTables, gamma: float = 1.0, nodes: int = 16) -> float:
    """``||W_gamma||_1 = (2/gamma) int_0^inf t w(t) dt``."""
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    edges = tables.panel_edges
    lo, hi = edges[:-1, None], edges[1:, None]
    t = (hi - lo) / 2 * xg[None, :] + (hi + lo) / 2
    vals = tables.c * tables.product(t.ravel()).reshape(t.shape)
    return 2.0 / gamma * float(((hi - lo) / 2 * wg[None, :] * t * vals).sum())


def kernel_F(omega, gamma: float, cutoff: Cutoff | None = None, tables: WeightTables | None = None) -> np.ndarray:
    """``int tau_t`` multiplier for weight ``w_gamma``: ``int cos(omega t) w_gamma(t) dt``."""
    tables = _tables(tables)
    omega = np.asarray(omega, dtype=float)
    if cutoff is None:
        return np.asarray(tables.cos_transform(omega.ravel(), gamma, exact_support=True)).reshape(omega.shape)
    return 2.0 * _half_line_cos(omega, gamma, cutoff, tables)


def kernel_G(omega, gamma: float, cutoff: Cutoff | None = None, tables: WeightTables | None = None) -> np.ndarray:
    """Multiplier for weight ``W_gamma``: ``(i/omega) (1 - 2 cos(omega T) W(T) - 2 int_0^T cos(omega t) w)``.

    Without cutoff the bracket is ``int_R (1 - cos(omega t)) w_gamma``.  With a
    cutoff, ``1 = 2 W(T) + 2 int_0^T w`` turns the bracket into
    ``2 W(T) (1 - cos(omega T)) + 2 int_0^T (1 - cos(omega t)) w``.  Both forms
    avoid cancellation at small ``omega``; below ``SMALL_OMEGA`` the
    linearization ``i omega int_R t^2 w_gamma / 2`` is used.
    """
    tables = _tables(tables)
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape, dtype=complex)
    big = np.abs(omega) >= SMALL_OMEGA
    if big.any():
        om = omega[big]
        if cutoff is None:
            bracket = np.asarray(tables.cos_transform(om, gamma, exact_support=True, complement=True))
        else:
            WT = float(tables.W(cutoff.T, gamma))
            bracket = (4.0 * np.sin(om * cutoff.T / 2) ** 2 * WT
                       + 2.0 * _half_line_cos(om, gamma, cutoff, tables, complement=True))
        out[big] = 1j * bracket / om
    small = ~big & (omega != 0)
    if small.any():
        out[small] = 1j * omega[small] * second_moment(tables, gamma) / 2.0
    return out


# weighted integrals ------------------------------------------------------------------------

@dataclass
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, H) -> "Spectrum":
        E, V = algebra.eigh(_matrix(H))
        return cls(np.asarray(E), np.asarray(V))

    @property
    def omega(self) -> np.ndarray:
        return self.energies[:, None] - self.energies[None, :]

    def to_eigen(self, M: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ M @ self.vectors

    def from_eigen(self, M: np.ndarray) -> np.ndarray:
        return self.vectors @ M @ self.vectors.conj().T


def weighted_integral(A, H, gamma: float, mode: str = "F", cutoff: Cutoff | None = None,
                      tables: WeightTables | None = None, spectrum: Spectrum | None = None) -> np.ndarray:
    """``int tau_t(A) w_gamma(t) dt`` (mode ``F``) or ``int tau_t(A) W_gamma(t) dt`` (mode ``G``)."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    sp = Spectrum.of(H) if spectrum is None else spectrum
    M = sp.to_eigen(_matrix(A))
    if mode == "F":
        K = kernel_F(sp.omega, gamma, cutoff, tables)
    elif mode == "G":
        K = kernel_G(sp.omega, gamma, cutoff, tables)
    else:
        raise DomainError(f"mode must be 'F' or 'G', got {mode!r}")
    return sp.from_eigen(K * M)


def brute_weighted_integral(A, H, gamma: float, mode: str, T: float, points: int = 4001,
                            tables: WeightTables | None = None) -> np.ndarray:
    """Time-domain Simpson quadrature of ``tau_t(A)`` against the weight on ``[-T, T]``.

    Independent of the eigenbasis multiplier route; used as an oracle.
    """
    tables = _tables(tables)
    if points % 2 == 0:
        raise DomainError("Simpson quadrature needs an odd number of points")
    Hm, Am = _matrix(H), _matrix(A)
    t = np.linspace(-T, T, points)
    h = t[1] - t[0]
    simpson = np.ones(points)
    simpson[1:-1:2], simpson[2:-1:2] = 4.0, 2.0
    simpson *= h / 3.0
    if mode == "F":
        wt = np.asarray(tables.w(t, gamma))
    else:
        # the jump of W at 0 is symmetric, so the midpoint value 0 keeps the rule exact there
        wt = np.where(t == 0, 0.0, np.asarray(tables.W(t, gamma)))
    step = algebra.unitary_exp(Hm, -h)  # e^{i h H}
    Ut = algebra.unitary_exp(Hm, T)  # e^{-i T H} = e^{i t0 H} at t0 = -T
    out = np.zeros_like(Am)
    for k in range(points):
        if wt[k] != 0.0:
            out += simpson[k] * wt[k] * (Ut @ Am @ Ut.conj().T)
        Ut = step @ Ut
    return out


def inverse_liouvillean_audit(A, H, gamma: float, P: np.ndarray | None = None, cutoff: Cutoff | None = None,
                              tables: WeightTables | None = None, gap: float | None = None,
                              tol: float = 1e-6) -> list[AuditRecord]:
    """Block structure of ``F(A)`` and the identity ``i[H, G(A)] = F(A) - A``."""
    sp = Spectrum.of(H)
    if P is None or gap is None:
        prof = cluster_split(sp.energies)
        if P is None:
            Vg = sp.vectors[:, :prof.size]
            P = Vg @ Vg.conj().T
        gap = prof.gap if gap is None else gap
    if gamma > gap + 1e-12:
        raise PreconditionError(f"gamma {gamma} exceeds the spectral gap {gap}")
    Am, Hm = _matrix(A), _matrix(H)
    FA = weighted_integral(Am, Hm, gamma, "F", cutoff, tables, sp)
    GA = weighted_integral(Am, Hm, gamma, "G", cutoff, tables, sp)
    Q = np.eye(len(P)) - P
    off = P @ Am @ Q
    GO = weighted_integral(off, Hm, gamma, "G", cutoff, tables, sp)
    FO = weighted_integral(off, Hm, gamma, "F", cutoff, tables, sp)
    return [
        AuditRecord("F_commutes_with_P", opnorm(FA @ P - P @ FA), tol),
        AuditRecord("inverse_liouvillean", opnorm(1j * (Hm @ GA - GA @ Hm) - (FA - Am)), tol),
        AuditRecord("inverse_on_offdiagonal", opnorm(-1j * (Hm @ GO - GO @ Hm) - off), tol),
        AuditRecord("F_kills_offdiagonal", opnorm(FO), tol),
    ]


# generator and flow ----------------------------------------------------------------------------

def hastings_generator(Phi: Interaction, volume: Iterable, s: float, gamma: float,
                       cutoff: Cutoff | None = None, tables: WeightTables | None = None,
                       check: bool = True) -> np.ndarray:
    """``D(s) = int tau_t^{(s)}(H'(s)) W_gamma(t) dt`` in the eigenbasis of ``H(s)``."""
    vol = tuple(sorted(volume))
    H = hamiltonian(Phi, vol, s).matrix
    Hp = hamiltonian_derivative(Phi, vol, s).matrix
    if not np.any(Hp):
        return np.zeros_like(H)
    D = weighted_integral(Hp, H, gamma, "G", cutoff, tables)
    if check:
        algebra.check_hermitian(D, 1e-10, "generator")
    return (D + D.conj().T) / 2


@dataclass
class FlowResult:
    s_grid: np.ndarray
    U: list
    generators: dict
    gamma: float
    cutoff: Cutoff | None
    ode_step: float
    unitarity: float
    transport: np.ndarray = field(default_factory=lambda: np.zeros(0))
    projections: list = field(default_factory=list)

    def alpha(self, A, k: int) -> np.ndarray:
        """``alpha_{s_k}(A) = U(s_k)* A U(s_k)``."""
        U = self.U[k]
        return U.conj().T @ _matrix(A) @ U

    def cocycle(self, A, k_t: int, k_s: int) -> np.ndarray:
        """``alpha_{t,s}(A) = alpha_s^{-1}(alpha_t(A))``."""
        Us = self.U[k_s]
        return Us @ self.alpha(A, k_t) @ Us.conj().T


def ground_projection(H, size: int | None = None) -> tuple[np.ndarray, "ClusterSplit"]:
    sp = Spectrum.of(H)
    prof = cluster_split(sp.energies) if size is None else _split_at(sp.energies, size - 1)
    V = sp.vectors[:, :prof.size]
    return V @ V.conj().T, prof


def flow(Phi: Interaction, volume: Iterable, gamma: float, s_grid, ode_step: float,
         cutoff: Cutoff | None = None, tables: WeightTables | None = None, tol_unitary: float = 1e-8,
         cluster_size: int | None = None) -> FlowResult:
    """Integrate ``dU/ds = i D(s) U`` by rk4 between grid points, re-unitarizing each step.

    The generator is evaluated directly at the rk4 stage points.  Transport
    residuals ``||alpha_s(P(s)) - P(0)||`` are recorded at the grid points.
    """
    vol = tuple(sorted(volume))
    s_grid = np.asarray(s_grid, dtype=float)
    if ode_step <= 0:
        raise DomainError("ode_step must be positive")
    tables = _tables(tables)
    cache: dict = {}

    def D(s):
        key = round(float(s), 14)
        hit = cache.get(key)
        if hit is None:
            hit = hastings_generator(Phi, vol, s, gamma, cutoff, tables)
            cache[key] = hit
        return hit

    dim = int(np.prod(algebra._dims_for(vol, Phi.dims_map())))
    U = np.eye(dim, dtype=complex)
    Us = [U.copy()]
    worst = 0.0
    for a, b in zip(s_grid[:-1], s_grid[1:]):
        n = max(1, int(math.ceil(abs(b - a) / ode_step - 1e-12)))
        h = (b - a) / n
        for k in range(n):
            s = a + k * h
            D0, Dm, D1 = D(s), D(s + h / 2), D(s + h)
            k1 = 1j * D0 @ U
            k2 = 1j * Dm @ (U + h / 2 * k1)
            k3 = 1j * Dm @ (U + h / 2 * k2)
            k4 = 1j * D1 @ (U + h * k3)
            V = U + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            worst = max(worst, opnorm(V.conj().T @ V - np.eye(dim)))
            U = polar_unitary(V)
        Us.append(U.copy())
    if worst > tol_unitary:
        raise ConvergenceError(f"unitarity defect {worst:g} before re-unitarization exceeds {tol_unitary:g}")
    gens = {float(s): D(s) for s in s_grid}
    res = FlowResult(s_grid, Us, gens, gamma, cutoff, ode_step, worst)
    P0, prof0 = ground_projection(hamiltonian(Phi, vol, s_grid[0]).matrix, cluster_size)
    size = prof0.size
    residuals, projs = [], []
    for k, s in enumerate(s_grid):
        Ps, _ = ground_projection(hamiltonian(Phi, vol, s).matrix, size)
        projs.append(Ps)
        residuals.append(opnorm(res.alpha(Ps, k) - P0))
    res.transport = np.array(residuals)
    res.projections = projs
    return res


def transport_budget(Phi: Interaction, volume: Iterable, result: FlowResult, refined: FlowResult,
                     tables: WeightTables | None = None) -> np.ndarray:
    """Per-node budget ``2 int_0^s ||H'|| |W_gamma| tail beyond T + ODE error``.

    The ODE error is estimated by the difference against a run with half the step.
    """
    tables = _tables(tables)
    vol = tuple(sorted(volume))
    if result.cutoff is None:
        tail = tables.far_tail
    else:
        tail = 2.0 * math.exp(tables.log_tail(result.cutoff.T, result.gamma, 1))
    norms = np.array([opnorm(hamiltonian_derivative(Phi, vol, s).matrix) for s in result.s_grid])
    cum = np.concatenate([[0.0], np.cumsum((norms[1:] + norms[:-1]) / 2 * np.diff(result.s_grid))])
    ode = np.array([opnorm(a - b) for a, b in zip(result.U, refined.U)])
    return 2.0 * cum * tail + 2.0 * ode


def automorphic_equivalence_audit(Phi: Interaction, volume: Iterable, gamma: float, s_grid,
                                  ode_step: float, cutoff: Cutoff | None = None,
                                  tables: WeightTables | None = None, tol: float = 0.05,
                                  profile: "GapProfile" | None = None) -> dict:
    """Residuals ``||alpha_{t,s}(P(t)) - P(s)||`` over the grid and ground-state fidelities."""
    if profile is not None and not profile.gapped:
        raise PreconditionError("curve is not uniformly gapped")
    if profile is not None and gamma > profile.min_gap + 1e-12:
        raise PreconditionError("gamma exceeds the audited gap")
    res = flow(Phi, volume, gamma, s_grid, ode_step, cutoff, tables)
    P = res.projections
    rows = []
    for i in range(len(res.s_grid)):
        for j in range(len(res.s_grid)):
            r = opnorm(res.cocycle(P[j], j, i) - P[i])
            rows.append({"s": float(res.s_grid[i]), "t": float(res.s_grid[j]), "residual": r})
    fidelity = None
    if np.isclose(np.trace(P[0]).real, 1.0):
        psi0 = np.linalg.eigh(P[0])[1][:, -1]
        fidelity = []
        for k in range(len(res.s_grid)):
            psik = np.linalg.eigh(P[k])[1][:, -1]
            fidelity.append(float(abs(psik.conj() @ res.U[k] @ psi0)))
    worst = max(r["residual"] for r in rows)
    return {"rows": rows, "max_residual": worst, "fidelity": fidelity, "passed": worst <= tol, "flow": res}


# Hastings interaction ------------------------------------------------------------------------------

def generator_map(Phi: Interaction, volume: Iterable, gamma: float, cutoff: Cutoff | None = None,
                  tables: WeightTables | None = None) -> Callable[[float], QuasiLocalMap]:
    """``s -> K_s`` with ``K_s(A) = int tau_t^{(s)}(A) W_gamma(t) dt``."""
    vol = tuple(sorted(volume))

    def at(s: float) -> QuasiLocalMap:
        H = hamiltonian(Phi, vol, s).matrix
        sp = Spectrum.of(H)
        K = kernel_G(sp.omega, gamma, cutoff, tables)
        fn = lambda M: sp.from_eigen(K * sp.to_eigen(M))
        return QuasiLocalMap(fn, vol, QLParams(), Phi.dims_map(), True, f"G[{s:g}]")

    return at


def hastings_interaction(Phi: Interaction, volume: Iterable, s: float, gamma: float, rho: ProductState,
                         G: MetricSpace, cutoff: Cutoff | None = None,
                         tables: WeightTables | None = None) -> TransformedInteraction:
    """Local terms whose sum is ``D(s)``, from the shell decomposition of ``K_s(Phi'(X, s))``."""
    vol = tuple(sorted(volume))
    K = generator_map(Phi, vol, gamma, cutoff, tables)
    T = transform_interaction(K, Phi.derivative(), vol, rho, G, s)
    D = hastings_generator(Phi, vol, s, gamma, cutoff, tables, check=False)
    total = T.total()
    T.residual = max(T.residual, float(np.abs(total - D).max()))
    if T.residual > 1e-10:
        from .errors import AuditFailure
        raise AuditFailure(f"Hastings reconstruction residual {T.residual:g}",
                           AuditRecord("hastings_reconstruction", T.residual, 1e-10))
    return T


def term_norms_by_diameter(T: TransformedInteraction, G: MetricSpace) -> dict:
    """Largest ``||Psi(Z)||`` at each diameter of ``Z``."""
    out: dict = {}
    for Z, op in T.terms.items():
        d = int(round(G.diameter(Z)))
        out[d] = max(out.get(d, 0.0), opnorm(op))
    return dict(sorted(out.items()))


def nested_volume_differences(Phi: Interaction, G: MetricSpace, volumes: list, core: Iterable, s: float,
                              gamma: float, rho: ProductState, tables: WeightTables | None = None) -> list:
    """``sum_{Z in core} ||Psi_L(Z) - Psi_L'(Z)||`` for consecutive volumes ``L`` inside ``L'``."""
    core = set(core)
    terms = []
    for vol in volumes:
        T = hastings_interaction(Phi, vol, s, gamma, rho, G, None, tables)
        terms.append({Z: op for Z, op in T.terms.items() if set(Z) <= core})
    out = []
    for a, b in zip(terms[:-1], terms[1:]):
        total = 0.0
        for Z in set(a) | set(b):
            ma = a[Z].matrix if Z in a else np.zeros_like(b[Z].matrix)
            mb = b[Z].matrix if Z in b else np.zeros_like(a[Z].matrix)
            total += opnorm(ma - mb)
        out.append(total)
    return out


# quasi-locality bounds for the weighted integrals ------------------------------------------------------

@dataclass(frozen=True)
class FlowQLInputs:
    """``||[tau_t(A), B]|| <= C ||A|| ||B|| |X| exp(v |t| - g(d))``."""

    C: float
    v: float
    g: Weight


def lr_exponential_inputs(Phi: Interaction, base: DecayFunction, rate: float, G: MetricSpace,
                          s: float = 0.0, t: float = 1.0) -> FlowQLInputs:
    """Inputs from the exponential form of the Lieb-Robinson bound with ``F = exp(-rate r) base``."""
    F = DecayFunction.from_callable(lambda r: np.exp(-rate * np.asarray(r)) * base(r), f"exp({rate:g})*{base.label}")
    CF = f_constants(F, G).conv_constant
    v = 2.0 / rate * CF * sup_f_norm(Phi, F, G, s, t)
    C = 2.0 * f_constants(base, G).uniform_norm / CF
    return FlowQLInputs(C, rate * v, Weight(lambda r: rate * np.asarray(r, dtype=float), "linear", a=rate))


def d_star(inputs: FlowQLInputs, gamma: float, epsilon: float, eta: float, d_max: float = 1e8) -> float:
    """Smallest ``d`` with ``max(9, sqrt(eta gamma_eps / eps)) <= ln(gamma_eps g(d))``."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    ge = (1.0 - epsilon) * gamma / inputs.v
    target = math.exp(max(9.0, math.sqrt(eta * ge / epsilon))) / ge
    g = inputs.g
    if float(g(0.0)) >= target:
        return 0.0
    if float(g(d_max)) < target:
        return math.inf
    return float(optimize.brentq(lambda d: float(g(d)) - target, 0.0, d_max, xtol=1e-12, rtol=1e-14))


def flow_ql_bound(inputs: FlowQLInputs, gamma: float, epsilon: float, mode: str = "F",
                  tables: WeightTables | None = None) -> DecayFunction:
    """Decay profile ``G^eps_F`` or ``G^eps_G`` of the weighted integral operators."""
    tables = _tables(tables)
    if inputs.g.kind == "log":
        warnings.warn("logarithmic g gives a decay function without finite moments", RuntimeWarning)
    ge = (1.0 - epsilon) * gamma / inputs.v
    ds = d_star(inputs, gamma, epsilon, tables.eta)
    c, eta = tables.c, tables.eta
    if mode == "F":
        plateau = 1.0

        def tail(f):
            return c * (inputs.C * gamma / inputs.v + 27.0 / 7.0 * math.e**4 * f**2) * np.exp(-eta * f)
    elif mode == "G":
        plateau = first_abs_moment(tables, gamma)

        def tail(f):
            return (inputs.C / (2 * inputs.v) + 243.0 / (49.0 * gamma * eta) * c * math.e**4 * f**3) * np.exp(-eta * f)
    else:
        raise DomainError("mode must be 'F' or 'G'")

    def fn(d):
        d = np.asarray(d, dtype=float)
        gd = np.asarray(inputs.g(d), dtype=float)
        f = np.asarray(f_b(np.maximum(gd, 0.0), ge), dtype=float)
        val = np.minimum(plateau, tail(f))
        return np.where(d <= ds, plateau, val)

    return DecayFunction(fn, "flow", label=f"G_{mode}^{epsilon:g}", allow_zero=True)


# gaps -------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterSplit:
    size: int
    width: float
    gap: float
    lower: float
    upper: float
    ambiguous: bool = False


def _split_at(E: np.ndarray, k: int) -> ClusterSplit:
    gap = float(E[k + 1] - E[k]) if k + 1 < len(E) else math.inf
    return ClusterSplit(k + 1, float(E[k] - E[0]), gap, float(E[0]), float(E[k]))


def cluster_split(E, policy: str = "auto", gamma: float | None = None, size: int | None = None,
                  ratio: float = 10.0, atol: float = 1e-9) -> ClusterSplit:
    """Split a sorted spectrum into a ground cluster and the rest.

    ``count`` takes the lowest ``size`` levels; ``window`` cuts at the first
    spacing of at least ``gamma``; ``auto`` cuts at the first spacing exceeding
    ``ratio`` times the cluster width (plus ``atol``) within the lower half.
    An unavailable cut is reported with ``ambiguous=True``.
    """
    E = np.sort(np.asarray(E, dtype=float))
    if len(E) < 2:
        return ClusterSplit(len(E), 0.0, math.inf, float(E[0]), float(E[-1]))
    gaps = np.diff(E)
    if policy == "count":
        if size is None or not 1 <= size < len(E):
            raise DomainError("count policy needs 1 <= size < dimension")
        return _split_at(E, size - 1)
    if policy == "window":
        if gamma is None:
            raise DomainError("window policy needs gamma")
        idx = np.nonzero(gaps >= gamma)[0]
        if len(idx) == 0:
            return ClusterSplit(len(E), float(E[-1] - E[0]), 0.0, float(E[0]), float(E[-1]), True)
        return _split_at(E, int(idx[0]))
    if policy != "auto":
        raise DomainError(f"unknown cluster policy {policy!r}")
    for k in range(max(1, len(E) // 2)):
        if gaps[k] > ratio * (E[k] - E[0]) + atol:
            return _split_at(E, k)
    return ClusterSplit(len(E), float(E[-1] - E[0]), 0.0, float(E[0]), float(E[-1]), True)


@dataclass
class GapProfile:
    rows: list
    min_gap: float
    max_width: float
    gapped: bool

    def table(self) -> list[dict]:
        return list(self.rows)


def gap_audit(Phi: Interaction, volumes: list, s_grid, policy: str = "auto", gamma: float | None = None,
              size: int | None = None) -> GapProfile:
    """Spectral splitting of every ``H(s)`` on every volume."""
    rows = []
    for vol in volumes:
        vol = tuple(sorted(vol))
        for s in np.asarray(s_grid, dtype=float):
            E = np.linalg.eigvalsh(hamiltonian(Phi, vol, s).matrix)
            sp = cluster_split(E, policy, gamma, size)
            rows.append({"n_sites": len(vol), "s": float(s), "cluster": sp.size, "width": sp.width,
                         "gap": sp.gap, "lower": sp.lower, "upper": sp.upper, "ambiguous": sp.ambiguous})
    gaps = [r["gap"] for r in rows]
    min_gap = float(min(gaps)) if gaps else 0.0
    gapped = min_gap > 0 and not any(r["ambiguous"] for r in rows)
    if gamma is not None:
        gapped = gapped and min_gap >= gamma
    return GapProfile(rows, min_gap, float(max(r["width"] for r in rows)) if rows else 0.0, gapped)


__all__ = [
    "Cutoff", "kernel_F", "kernel_G", "second_moment", "first_abs_moment", "Spectrum", "weighted_integral",
    "brute_weighted_integral", "inverse_liouvillean_audit", "hastings_generator", "FlowResult", "flow",
    "ground_projection", "transport_budget", "automorphic_equivalence_audit", "generator_map",
    "hastings_interaction", "term_norms_by_diameter", "nested_volume_differences", "FlowQLInputs",
    "lr_exponential_inputs", "d_star", "flow_ql_bound", "ClusterSplit", "cluster_split", "GapProfile",
    "gap_audit",
]
