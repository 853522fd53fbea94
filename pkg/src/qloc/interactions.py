"""Interactions: finite families of Hermitian local terms with scalar schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from . import algebra
from .algebra import LocalOperator, embed, opnorm
from .audit import AuditRecord
from .decay import DecayFunction, f_constants, moment
from .errors import ConfigurationError, ConvergenceError, DomainError, ValidationError
from .lattice import MetricSpace, regularity_audit


class Schedule:
    """Real coefficient ``t -> f(t)`` with an optional derivative."""

    def __init__(self, fn: Callable[[float], float], deriv: Callable[[float], float] | None,
                 label: str, constant: bool = False):
        self.fn = fn
        self.deriv = deriv
        self.label = label
        self.constant = constant

    def __call__(self, t: float) -> float:
        return float(self.fn(t))

    def derivative(self, t: float) -> float:
        if self.deriv is None:
            raise ConfigurationError(f"schedule {self.label} has no derivative")
        return float(self.deriv(t))

    def __repr__(self):
        return f"Schedule({self.label})"

    @classmethod
    def constant_value(cls, v: float):
        v = float(v)
        return cls(lambda t: v, lambda t: 0.0, f"{v:g}", constant=True)

    @classmethod
    def affine(cls, a: float, b: float):
        """``a + b t``."""
        if b == 0:
            return cls.constant_value(a)
        return cls(lambda t: a + b * t, lambda t: b, f"{a:g}+{b:g}t")

    @classmethod
    def sine(cls, a: float, b: float, omega: float = 1.0):
        """``a + b sin(omega t)``."""
        if b == 0:
            return cls.constant_value(a)
        return cls(lambda t: a + b * math.sin(omega * t), lambda t: b * omega * math.cos(omega * t),
                   f"{a:g}+{b:g}sin({omega:g}t)")

    def scaled(self, k: float) -> "Schedule":
        f, df = self.fn, self.deriv
        dd = None if df is None else (lambda t: k * df(t))
        return Schedule(lambda t: k * f(t), dd, f"{k:g}*({self.label})", self.constant)

    def derived(self) -> "Schedule":
        """The derivative as a schedule of its own (no second derivative)."""
        if self.deriv is None:
            raise ConfigurationError(f"schedule {self.label} has no derivative")
        if self.constant:
            return Schedule.constant_value(0.0)
        return Schedule(self.deriv, None, f"d({self.label})")


def as_schedule(value) -> Schedule:
    if isinstance(value, Schedule):
        return value
    if callable(value):
        return Schedule(value, None, getattr(value, "__name__", "f"))
    return Schedule.constant_value(value)


@dataclass(frozen=True)
class Entry:
    support: tuple
    matrix: np.ndarray
    schedule: Schedule
    dims: tuple


class Interaction:
    """``Z -> Phi(Z, t) = sum_k f_k(t) M_k`` over a finite list of supports."""

    def __init__(self, entries: Iterable[Entry] = (), name: str = "interaction",
                 param_range: tuple[float, float] = (-math.inf, math.inf)):
        self.entries = list(entries)
        self.name = name
        self.param_range = param_range
        self._groups: dict[tuple, list[Entry]] = {}
        for e in self.entries:
            self._groups.setdefault(e.support, []).append(e)
        self._norm_cache: dict = {}
        self._embed_cache: dict = {}

    # construction ---------------------------------------------------------
    @classmethod
    def from_terms(cls, terms: Iterable, name: str = "interaction", param_range=(-math.inf, math.inf),
                   dims: Mapping | None = None, check: bool = True):
        """``terms`` yields ``(support, matrix, coefficient)``; coefficient may be a number or Schedule."""
        entries = []
        for support, matrix, coef in terms:
            sup = tuple(sorted(support))
            d = algebra._dims_for(sup, dims)
            M = np.asarray(matrix, dtype=complex)
            if check and not algebra.is_hermitian(M, 1e-12):
                raise ValidationError(f"term on {sup} is not Hermitian")
            if M.shape != (int(np.prod(d)),) * 2:
                raise DomainError(f"term on {sup} has shape {M.shape}, expected dims {d}")
            entries.append(Entry(sup, M, as_schedule(coef), d))
        return cls(entries, name, param_range)

    def supports(self) -> list[tuple]:
        return sorted(self._groups, key=lambda z: (len(z), z))

    def __len__(self):
        return len(self._groups)

    def __repr__(self):
        return f"Interaction({self.name!r}, {len(self)} supports)"

    @property
    def is_constant(self) -> bool:
        return all(e.schedule.constant for e in self.entries)

    def dims_map(self) -> dict:
        out = {}
        for e in self.entries:
            out.update(zip(e.support, e.dims))
        return out

    def sites(self) -> set:
        return {s for z in self._groups for s in z}

    # evaluation -----------------------------------------------------------
    def term(self, Z, t: float = 0.0) -> LocalOperator:
        Z = tuple(sorted(Z))
        group = self._groups.get(Z)
        if not group:
            raise DomainError(f"no term on {Z}")
        M = sum(e.schedule(t) * e.matrix for e in group)
        return LocalOperator(Z, M, group[0].dims)

    def term_derivative(self, Z, t: float = 0.0) -> LocalOperator:
        Z = tuple(sorted(Z))
        group = self._groups[Z]
        M = sum(e.schedule.derivative(t) * e.matrix for e in group)
        return LocalOperator(Z, M, group[0].dims)

    def norms(self, t: float = 0.0) -> dict:
        """``{Z: ||Phi(Z, t)||}``, cached per ``t``."""
        key = 0.0 if self.is_constant else float(t)
        hit = self._norm_cache.get(key)
        if hit is None:
            hit = {Z: opnorm(self.term(Z, t)) for Z in self.supports()}
            if len(self._norm_cache) > 4096:
                self._norm_cache.clear()
            self._norm_cache[key] = hit
        return hit

    # algebra on interactions ----------------------------------------------
    def _rebuild(self, entries, name):
        return Interaction(entries, name, self.param_range)

    def scaled(self, k: float) -> "Interaction":
        return self._rebuild([Entry(e.support, e.matrix, e.schedule.scaled(k), e.dims)
                              for e in self.entries], f"{k:g}*{self.name}")

    def __add__(self, other: "Interaction") -> "Interaction":
        return self._rebuild(self.entries + other.entries, f"{self.name}+{other.name}")

    def __sub__(self, other: "Interaction") -> "Interaction":
        return self + other.scaled(-1.0)

    def restrict(self, volume: Iterable) -> "Interaction":
        vol = set(volume)
        return self._rebuild([e for e in self.entries if set(e.support) <= vol],
                             f"{self.name}|restricted")

    def derivative(self) -> "Interaction":
        """Term-wise parameter derivative."""
        return self._rebuild([Entry(e.support, e.matrix, e.schedule.derived(), e.dims)
                              for e in self.entries], f"d/dt {self.name}")

    def moment(self, p: float) -> "Interaction":
        return self._rebuild([Entry(e.support, e.matrix * float(len(e.support)) ** p, e.schedule, e.dims)
                              for e in self.entries], f"{self.name}_m{p:g}")

    def frozen(self, t: float) -> "Interaction":
        """Constant interaction with the terms evaluated at ``t``."""
        return self._rebuild([Entry(Z, self.term(Z, t).matrix, Schedule.constant_value(1.0),
                                    self._groups[Z][0].dims) for Z in self.supports()],
                             f"{self.name}@{t:g}")

    # Hamiltonians -----------------------------------------------------------
    def embedded_parts(self, volume: Iterable, dims: Mapping | None = None):
        """``[(schedule, full matrix)]`` for the entries inside ``volume``, cached."""
        vol = tuple(sorted(volume))
        hit = self._embed_cache.get(vol)
        if hit is None:
            dm = {**self.dims_map(), **(dims or {})}
            vs = set(vol)
            hit = [(e.schedule, embed(LocalOperator(e.support, e.matrix, e.dims), vol, dm).matrix)
                   for e in self.entries if set(e.support) <= vs]
            self._embed_cache[vol] = hit
        return hit


def hamiltonian(Phi: Interaction, volume: Iterable, t: float = 0.0,
                onsite: Mapping | None = None, dims: Mapping | None = None) -> LocalOperator:
    """Local Hamiltonian on ``volume``: on-site parts plus every term inside the volume."""
    vol = tuple(sorted(volume))
    dm = {**Phi.dims_map(), **(dims or {})}
    d = algebra._dims_for(vol, dm)
    algebra._check_cap(int(np.prod(d, dtype=np.int64)))
    total = int(np.prod(d, dtype=np.int64))
    H = np.zeros((total, total), dtype=complex)
    for sched, M in Phi.embedded_parts(vol, dm):
        c = sched(t)
        if c != 0.0:
            H += c * M
    if onsite:
        for s, h in onsite.items():
            if s in vol:
                H += embed(LocalOperator((s,), h, (np.shape(h)[0],)), vol, dm).matrix
    return LocalOperator(vol, H, d)


def hamiltonian_derivative(Phi: Interaction, volume: Iterable, t: float = 0.0,
                           dims: Mapping | None = None) -> LocalOperator:
    vol = tuple(sorted(volume))
    dm = {**Phi.dims_map(), **(dims or {})}
    d = algebra._dims_for(vol, dm)
    total = int(np.prod(d, dtype=np.int64))
    H = np.zeros((total, total), dtype=complex)
    for sched, M in Phi.embedded_parts(vol, dm):
        c = sched.derivative(t)
        if c != 0.0:
            H += c * M
    return LocalOperator(vol, H, d)


# norms --------------------------------------------------------------------

@dataclass
class InteractionNormReport:
    f_norm: float
    argmax: tuple
    pair_sums: np.ndarray

    def __float__(self):
        return self.f_norm


def pair_sums(Phi: Interaction, G: MetricSpace, t: float = 0.0) -> np.ndarray:
    """``S[x, y] = sum over terms containing x and y of ||Phi(Z, t)||``."""
    S = np.zeros(G.dist.shape)
    for Z, nz in Phi.norms(t).items():
        if nz == 0.0:
            continue
        idx = G.indices(Z)
        S[np.ix_(idx, idx)] += nz
    return S


def f_norm(Phi: Interaction, F: DecayFunction, G: MetricSpace, t: float = 0.0) -> InteractionNormReport:
    """``sup_{x,y} F(d(x,y))^-1 sum_{Z containing x, y} ||Phi(Z, t)||`` (the pair x = y included)."""
    S = pair_sums(Phi, G, t)
    Fm = np.asarray(F(G.dist), dtype=float)
    ratio = S / Fm
    k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    if ratio[k] == 0:
        return InteractionNormReport(0.0, (), S)
    return InteractionNormReport(float(ratio[k]), (G.sites[k[0]], G.sites[k[1]]), S)


def sup_f_norm(Phi: Interaction, F: DecayFunction, G: MetricSpace, s: float, t: float,
               samples: int = 201) -> float:
    """Sup of the F-norm over ``[min(s,t), max(s,t)]`` on a uniform sample grid."""
    if Phi.is_constant or s == t:
        return f_norm(Phi, F, G, s).f_norm
    grid = np.linspace(min(s, t), max(s, t), samples)
    return max(f_norm(Phi, F, G, r).f_norm for r in grid)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-9,
                     max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature with absolute tolerance ``tol``."""
    if a == b:
        return 0.0

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        if depth <= 0:
            raise ConvergenceError(f"adaptive Simpson did not converge on [{a}, {b}]")
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    # one forced split guards against symmetric cancellation on the first panel
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    flm, frm = f(0.5 * (a + m)), f(0.5 * (m + b))
    return (recurse(a, m, fa, flm, fm, simpson(fa, flm, fm, a, m), tol / 2, max_depth)
            + recurse(m, b, fm, frm, fb, simpson(fm, frm, fb, m, b), tol / 2, max_depth))


def its_integral(Phi: Interaction, F: DecayFunction, G: MetricSpace, s: float, t: float,
                 tol: float = 1e-9, conv_constant: float | None = None) -> float:
    """``C_F`` times the integral of the F-norm between ``s`` and ``t``."""
    if s == t:
        return 0.0
    CF = f_constants(F, G).conv_constant if conv_constant is None else conv_constant
    lo, hi = min(s, t), max(s, t)
    if Phi.is_constant:
        return CF * f_norm(Phi, F, G, lo).f_norm * (hi - lo)
    val = adaptive_simpson(lambda r: f_norm(Phi, F, G, r).f_norm, lo, hi, tol / CF)
    return CF * val


def moment_interaction(Phi: Interaction, p: float) -> Interaction:
    """``Z -> |Z|^p Phi(Z)``."""
    return Phi.moment(p)


# boundaries ---------------------------------------------------------------

@dataclass(frozen=True)
class PhiBoundary:
    X: frozenset
    boundary: frozenset


def phi_boundary(Phi: Interaction, X: Iterable, volume: Iterable | None = None,
                 samples: int = 11) -> PhiBoundary:
    """Sites of ``X`` lying in a non-vanishing term that leaves ``X`` (terms inside ``volume``)."""
    Xs = frozenset(X)
    vol = None if volume is None else set(volume)
    lo, hi = Phi.param_range
    if math.isfinite(lo) and math.isfinite(hi):
        times = np.linspace(lo, hi, samples)
    else:
        times = np.linspace(0.0, 1.0, samples)
    out = set()
    for Z in Phi.supports():
        Zs = set(Z)
        if vol is not None and not Zs <= vol:
            continue
        if Zs <= Xs or not (Zs & Xs):
            continue
        if Phi.is_constant:
            alive = opnorm(Phi.term(Z, 0.0)) > 0
        else:
            alive = any(opnorm(Phi.term(Z, float(t))) > 0 for t in times)
        if alive:
            out |= Zs & Xs
    return PhiBoundary(Xs, frozenset(out))


# appendix sum audits ---------------------------------------------------------

APPENDIX_CHECKS = ("distance", "diameter", "moment", "weighted")


def appendix_sum_audit(Phi: Interaction, F: DecayFunction, G: MetricSpace, X: Iterable, R: float,
                       p: float = 1.0, Gw: DecayFunction | None = None, t: float = 0.0,
                       nu: float | None = None, kappa: float | None = None,
                       tol: float = 1e-12, checks: Iterable[str] = APPENDIX_CHECKS) -> list[AuditRecord]:
    """Brute-force left sides against the distance, diameter, moment and weighted-sum bounds.

    ``checks`` selects the families; the diameter, moment and weighted-sum
    bounds need finite moments of ``F`` of order up to ``(p + 2) nu``.
    """
    checks = set(checks)
    if not checks <= set(APPENDIX_CHECKS):
        raise ConfigurationError(f"unknown checks {sorted(checks - set(APPENDIX_CHECKS))}")
    if nu is None:
        if G.dim is None:
            raise ConfigurationError("nu is required for spaces without a box dimension")
        nu = float(G.dim)
    if kappa is None:
        kappa = regularity_audit(G, nu).kappa
    Gw = DecayFunction.exponential(1.0) if Gw is None else Gw
    X = frozenset(X)
    norms = Phi.norms(t)
    consts = f_constants(F, G)
    phi_F = f_norm(Phi, F, G, t).f_norm
    Fm = np.asarray(F(G.dist), dtype=float)
    records = []
    rel = lambda v: tol * max(1.0, abs(v))

    if "distance" in checks:
        records += _distance_records(Phi, F, G, X, R, norms, phi_F, consts, Fm, rel)
    if "diameter" in checks:
        records += _diameter_records(F, G, R, norms, phi_F, consts, nu, kappa, rel)
    if "moment" in checks:
        records.append(_moment_record(Phi, F, G, p, t, phi_F, nu, kappa, rel))
    if "weighted" in checks:
        records.append(_weighted_sum_record(Phi, F, G, Gw, norms, phi_F, consts, nu, kappa, rel))
    return records


def _distance_records(Phi, F, G, X, R, norms, phi_F, consts, Fm, rel) -> list[AuditRecord]:
    records = []
    XR = G.inflate(X, R)
    ix = G.indices(X)
    iXR = G.indices(XR)
    near = sum(nz for Z, nz in norms.items() if G.set_distance(Z, X) <= R)
    mid = phi_F * Fm[iXR].sum()
    records.append(AuditRecord("distance_near", near, mid, rel(mid), {"R": R}))
    records.append(AuditRecord("distance_near_coarse", mid, len(XR) * consts.uniform_norm * phi_F,
                               rel(mid), {"R": R}))
    far_lhs = 0.0
    for Z, nz in norms.items():
        if G.set_distance(Z, X) > R:
            far_lhs += nz * Fm[np.ix_(ix, G.indices(Z))].sum()
    outside = np.setdiff1d(np.arange(len(G)), iXR)
    far_rhs = consts.conv_constant * phi_F * Fm[np.ix_(ix, outside)].sum()
    records.append(AuditRecord("distance_far", far_lhs, far_rhs, rel(far_rhs), {"R": R}))
    return records


def _diameter_records(F, G, R, norms, phi_F, consts, nu, kappa, rel) -> list[AuditRecord]:
    records = []
    diam = {Z: G.diameter(Z) for Z in norms}
    small = np.zeros(len(G))
    large = np.zeros(len(G))
    for Z, nz in norms.items():
        idx = G.indices(Z)
        if diam[Z] <= R:
            small[idx] += nz
        else:
            large[idx] += nz
    rhs_small = phi_F * consts.uniform_norm
    records.append(AuditRecord("diameter_small", float(small.max()), rhs_small, rel(rhs_small), {"R": R}))
    rhs_large = kappa**2 * phi_F * moment(F, 2 * nu, R)
    records.append(AuditRecord("diameter_large", float(large.max()), rhs_large, rel(rhs_large), {"R": R}))
    return records


def _moment_record(Phi, F, G, p, t, phi_F, nu, kappa, rel) -> AuditRecord:
    Sp = pair_sums(Phi.moment(p), G, t)
    worst = None
    for i in range(len(G)):
        for j in range(len(G)):
            rhs = kappa ** (p + 2) * phi_F * moment(F, (p + 2) * nu, G.dist[i, j])
            r = AuditRecord("moment", float(Sp[i, j]), rhs, rel(rhs),
                            {"x": G.sites[i], "y": G.sites[j], "p": p})
            if worst is None or (r.lhs - r.rhs) > (worst.lhs - worst.rhs):
                worst = r
    return worst


def _weighted_sum_record(Phi, F, G, Gw, norms, phi_F, consts, nu, kappa, rel) -> AuditRecord:
    n_sites = len(G)
    top = int(math.ceil(G.diameter())) + 1
    # member[n][Z] is the boolean site mask of Z(n+1)
    lhs = np.zeros((n_sites, n_sites))
    for Z, nz in norms.items():
        if nz == 0.0:
            continue
        iz = G.indices(Z)
        dZ = G.dist[iz].min(axis=0)
        for n in range(top):
            mask = dZ <= n + 1
            w = Gw(float(n)) if n < top - 1 else moment(Gw, 0.0, float(n))
            if w == 0.0:
                continue
            idx = np.flatnonzero(mask)
            lhs[np.ix_(idx, idx)] += w * nz
    m2 = moment(Gw, 2 * nu + 1, 0.0)
    worst = None
    for i in range(n_sites):
        for j in range(n_sites):
            d = G.dist[i, j]
            rhs = kappa * phi_F * (kappa * m2 * float(F(d / 3.0))
                                   + consts.uniform_norm * moment(Gw, nu + 1, d / 3.0))
            r = AuditRecord("weighted_sum", float(lhs[i, j]), rhs, rel(rhs),
                            {"x": G.sites[i], "y": G.sites[j]})
            if worst is None or (r.lhs - r.rhs) > (worst.lhs - worst.rhs):
                worst = r
    return worst
