"""The band-limited spectral-flow weight ``w``, its rescalings ``w_gamma`` and the tail function ``W_gamma``.

``w(t) = c prod_n sinc(a_n t)^2`` with ``a_n = a_1 / (n ln(n)^2)`` for ``n >= 2``
and ``sum a_n = 1/2``.  Its Fourier transform vanishes outside ``[-1, 1]``, so
the trapezoid rule with step below ``2 pi / (1 + |k|)`` integrates
``cos(k t) w(t)`` exactly up to truncation of the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .audit import AuditRecord
from .errors import ConvergenceError, DomainError

SQRT_2PI = math.sqrt(2.0 * math.pi)
E9 = math.exp(9.0)


def _log_series_terms(N: int) -> np.ndarray:
    n = np.arange(2, N + 1, dtype=float)
    return 1.0 / (n * np.log(n) ** 2)


def series_tail(N: int) -> tuple[float, float]:
    """``sum_{n > N} 1/(n ln(n)^2)`` by Euler-Maclaurin, with a bound on the neglected remainder."""
    L = math.log(N)
    f = 1.0 / (N * L * L)
    fp = -(L + 2.0) / (N * N * L**3)
    # third derivative magnitude bounds the remainder of the two-term expansion
    fppp = 6.0 * (L**3 + 3 * L**2 + 6 * L + 6) / (N**4 * L**5)
    return 1.0 / L - f / 2.0 - fp / 12.0, fppp / 720.0 * 2.0


@dataclass(frozen=True)
class WeightTables:
    """Constants and cached grids of the weight; immutable after :func:`constants`."""

    a1: float
    c: float
    eta: float
    series_N: int
    series_error: float
    factors: int
    a: np.ndarray = field(repr=False)
    sq_tail: float = 0.0
    grid_step: float = 0.5
    grid_T: float = 1200.0
    grid: np.ndarray = field(default=None, repr=False)
    w_grid: np.ndarray = field(default=None, repr=False)
    panel_edges: np.ndarray = field(default=None, repr=False)
    panel_tail: np.ndarray = field(default=None, repr=False)
    far_tail: float = 0.0
    prod_tol: float = 1e-14

    # the unnormalized product -----------------------------------------------------
    def log_product(self, t) -> np.ndarray:
        """``log prod_n sinc(a_n t)^2`` with the quadratic correction for omitted factors."""
        t = np.abs(np.atleast_1d(np.asarray(t, dtype=float)))
        out = np.empty_like(t)
        chunk = max(1, 2_000_000 // len(self.a))
        for i in range(0, len(t), chunk):
            tt = t[i:i + chunk, None]
            x = self.a[None, :] * tt
            safe = np.where(x == 0.0, 1.0, x)
            s = np.where(x == 0.0, 1.0, np.sin(safe) / safe)
            with np.errstate(divide="ignore"):
                out[i:i + chunk] = 2.0 * np.log(np.abs(s)).sum(axis=1)
        return out - t**2 * self.sq_tail / 3.0

    def product(self, t) -> np.ndarray:
        return np.exp(self.log_product(t))

    # weights -------------------------------------------------------------------------
    def w(self, t, gamma: float = 1.0):
        """``w_gamma(t) = gamma w(gamma t)``."""
        _check_gamma(gamma)
        arr = np.asarray(t, dtype=float)
        out = gamma * self.c * self.product(gamma * arr.ravel()).reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def log_w(self, t, gamma: float = 1.0) -> np.ndarray:
        _check_gamma(gamma)
        return math.log(gamma * self.c) + self.log_product(gamma * np.asarray(t, dtype=float))

    def W(self, x, gamma: float = 1.0):
        """``W_gamma(x) = sgn(x) int_{|x|}^inf w_gamma``, with ``W_gamma(0) = 1/2``."""
        _check_gamma(gamma)
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.abs(arr) * gamma
        vals = np.array([self._upper_integral(v) for v in u.ravel()]).reshape(u.shape)
        out = np.where(arr == 0, 0.5, np.sign(arr) * vals)
        return float(out[0]) if np.ndim(x) == 0 else out

    def _upper_integral(self, u: float) -> float:
        """``int_u^inf w`` for ``u >= 0`` from the panel table."""
        edges = self.panel_edges
        if u >= edges[-1]:
            return math.exp(self.log_tail(u))
        k = int(np.searchsorted(edges, u, side="right"))
        head = _gl_integral(self, u, edges[k]) if edges[k] > u else 0.0
        return head + self.panel_tail[k]

    # Fourier side -------------------------------------------------------------------
    def cos_transform(self, k, gamma: float = 1.0, exact_support: bool = False,
                      complement: bool = False) -> np.ndarray:
        """``int cos(k t) w_gamma(t) dt`` by the band-limited trapezoid rule.

        With ``exact_support`` the value is set to zero for ``|k| >= gamma``,
        where the transform vanishes identically.  ``complement`` returns
        ``int (1 - cos(k t)) w_gamma(t) dt`` summed as ``2 sin(k t / 2)^2``,
        which keeps full relative accuracy for small ``k``.
        """
        _check_gamma(gamma)
        kk = np.atleast_1d(np.asarray(k, dtype=float)) / gamma
        out = np.ones(kk.shape) if complement else np.zeros(kk.shape)
        mask = np.abs(kk) < 1.0 if exact_support else np.ones(kk.shape, dtype=bool)
        if mask.any():
            sel = np.abs(kk[mask])
            step = min(self.grid_step, math.pi / (1.0 + float(sel.max())))
            if step < self.grid_step:
                t = np.arange(0.0, self.grid_T + step / 2, step)
                wt = self.c * self.product(t)
            else:
                t, wt = self.grid, self.w_grid
                step = self.grid_step
            weights = np.full(t.shape, 2.0 * step)
            weights[0] = step
            vals = np.empty(sel.shape)
            chunk = max(1, 4_000_000 // len(t))
            for i in range(0, len(sel), chunk):
                phase = np.outer(sel[i:i + chunk], t)
                kernel = 2.0 * np.sin(phase / 2) ** 2 if complement else np.cos(phase)
                vals[i:i + chunk] = kernel @ (weights * wt)
            out[mask] = vals
        return out if np.ndim(k) else float(out[0])

    def w_hat(self, k, gamma: float = 1.0, exact_support: bool = False):
        """Unitary Fourier transform of ``w_gamma``; real and even."""
        return np.asarray(self.cos_transform(k, gamma, exact_support)) / SQRT_2PI

    def W_hat(self, k, gamma: float = 1.0, exact_support: bool = False):
        """Unitary Fourier transform of ``W_gamma``: ``(1/sqrt(2 pi) - w_hat) / (i k)``, zero at ``k = 0``."""
        kk = np.atleast_1d(np.asarray(k, dtype=float))
        rest = np.atleast_1d(self.cos_transform(kk, gamma, exact_support, complement=True)) / SQRT_2PI
        out = np.zeros(kk.shape, dtype=complex)
        nz = kk != 0
        out[nz] = rest[nz] / (1j * kk[nz])
        return out if np.ndim(k) else complex(out[0])

    # tails in log form -----------------------------------------------------------------
    def log_tail(self, x: float, gamma: float = 1.0, moment: int = 0, panel: float = 1.0,
                 nodes: int = 16, drop: float = 60.0) -> float:
        """``log int_x^inf (t - x)^moment w_gamma(t) dt`` with panels summed in log space.

        Panels are added until the last one is ``drop`` e-folds below the running
        total; ``moment = 1`` gives ``log int_x^inf W_gamma``.
        """
        _check_gamma(gamma)
        u0 = gamma * x
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        logs = []
        a = u0
        total = -math.inf
        width = panel
        while True:
            b = a + width
            t = (b - a) / 2 * xg + (a + b) / 2
            lw = self.log_product(t) + math.log(self.c)
            with np.errstate(divide="ignore"):
                lweights = np.log(wg * (b - a) / 2) + (moment * np.log(np.maximum(t - u0, 1e-300)) if moment else 0.0)
            piece = logsumexp(lw + lweights)
            logs.append(piece)
            total = logsumexp(logs)
            if piece < total - drop and a > u0 + 50 * panel:
                break
            a = b
            width = min(width * 1.05, 50.0)
            if a > u0 + 1e7:
                raise ConvergenceError("tail integral did not settle")
        # change of variables t -> gamma t
        return total - moment * math.log(gamma)


def _check_gamma(gamma: float):
    if not gamma > 0:
        raise DomainError("gamma must be positive")


def _gl_integral(tables: WeightTables, a: float, b: float, nodes: int = 16) -> float:
    """``int_a^b w`` (gamma = 1) by Gauss-Legendre on unit panels."""
    if b <= a:
        return 0.0
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    m = max(1, int(math.ceil(b - a)))
    e = np.linspace(a, b, m + 1)
    lo, hi = e[:-1, None], e[1:, None]
    t = (hi - lo) / 2 * xg[None, :] + (hi + lo) / 2
    vals = tables.c * tables.product(t.ravel()).reshape(t.shape)
    return float(((hi - lo) / 2 * wg[None, :] * vals).sum())


@lru_cache(maxsize=4)
def constants(series_N: int = 10**6, factors: int = 2048, quad_tol: float = 1e-12,
              grid_step: float = 0.5, grid_T: float = 1200.0) -> WeightTables:
    """Compute ``a_1``, ``c`` and ``eta = 2 a_1`` together with the cached tables."""
    if series_N < 10**4:
        raise DomainError("series_N must be at least 1e4")
    if factors < 1000:
        raise DomainError("at least 1000 product factors are required")
    if grid_step >= math.pi:
        raise DomainError("grid step must stay below pi for the trapezoid rule to be exact")
    partial = float(_log_series_terms(series_N).sum())
    tail, tail_err = series_tail(series_N)
    if tail_err > quad_tol:
        raise ConvergenceError(f"series tail error {tail_err:g} above {quad_tol:g}; increase series_N")
    a1 = 0.5 / (1.0 + partial + tail)
    n = np.arange(1, factors + 1, dtype=float)
    a = np.empty(factors)
    a[0] = a1
    a[1:] = a1 / (n[1:] * np.log(n[1:]) ** 2)
    # sum of a_n^2 over omitted factors: direct partial sum plus integral tail
    far = np.arange(factors + 1, series_N + 1, dtype=float)
    sq_tail = float(((a1 / (far * np.log(far) ** 2)) ** 2).sum()) if len(far) else 0.0
    Lf = math.log(series_N)
    sq_tail += a1**2 / (series_N * Lf**4)

    proto = WeightTables(a1, 1.0, 2 * a1, series_N, tail_err, factors, a, sq_tail)
    grid = np.arange(0.0, grid_T + grid_step / 2, grid_step)
    wt = proto.product(grid)
    if wt[-1] > quad_tol * 1e-6:
        raise ConvergenceError("grid does not reach the negligible tail of the weight")
    integral = grid_step * (wt[0] + 2.0 * wt[1:].sum())
    c = 1.0 / integral
    tables = WeightTables(a1, c, 2 * a1, series_N, tail_err, factors, a, sq_tail, grid_step, grid_T,
                          grid, c * wt)
    # panel table for W: panel_tail[k] = int_{edges[k]}^inf w
    edges = np.arange(0.0, grid_T + 1.0, 1.0)
    xg, wg = np.polynomial.legendre.leggauss(16)
    lo, hi = edges[:-1, None], edges[1:, None]
    t = (hi - lo) / 2 * xg[None, :] + (hi + lo) / 2
    vals = c * proto.product(t.ravel()).reshape(t.shape)
    pieces = ((hi - lo) / 2 * wg[None, :] * vals).sum(axis=1)
    far_tail = math.exp(tables.log_tail(grid_T)) if wt[-1] > 0 else 0.0
    panel_tail = np.empty(len(edges))
    panel_tail[-1] = far_tail
    panel_tail[:-1] = np.cumsum(pieces[::-1])[::-1] + far_tail
    return WeightTables(a1, c, 2 * a1, series_N, tail_err, factors, a, sq_tail, grid_step, grid_T,
                        grid, c * wt, edges, panel_tail, far_tail)


# bounds ---------------------------------------------------------------------------------

def f_b(x, b: float):
    """``e^2/4`` on ``[0, e^2/b]`` and ``b x / ln(b x)^2`` beyond."""
    if not b > 0:
        raise DomainError("b must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("f_b is defined for x >= 0")
    bx = b * x
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(bx <= math.e**2, math.e**2 / 4.0, bx / np.log(np.maximum(bx, 1.0)) ** 2)
    return float(val) if val.ndim == 0 else val


def pointwise_bound(t, tables: WeightTables) -> np.ndarray:
    """``(c eta e^4 / 2) (t / ln(t)^2) exp(-eta t / ln(t)^2)`` for ``t >= e``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < math.e):
        raise DomainError("pointwise bound holds for t >= e")
    s = t / np.log(t) ** 2
    return tables.c * tables.eta * math.e**4 / 2.0 * s * np.exp(-tables.eta * s)


def log_tail_bound_w(x: float, gamma: float, tables: WeightTables) -> float:
    """Log of ``(27/14) c e^4 f_gamma(x)^2 exp(-eta f_gamma(x))``."""
    f = f_b(x, gamma)
    return math.log(27.0 / 14.0 * tables.c) + 4.0 + 2.0 * math.log(f) - tables.eta * f


def log_tail_bound_W(x: float, gamma: float, tables: WeightTables) -> float:
    """Log of ``486 / (49 gamma eta) c e^4 f_gamma(x)^3 exp(-eta f_gamma(x))``."""
    f = f_b(x, gamma)
    return (math.log(486.0 / (49.0 * gamma * tables.eta) * tables.c) + 4.0 + 3.0 * math.log(f)
            - tables.eta * f)


# audits --------------------------------------------------------------------------------

def series_sum_record(tables: WeightTables, N: int = 10**6) -> AuditRecord:
    """``|sum_n a_n - 1/2|`` with the tail bracketed between integrals."""
    partial = 1.0 + float(_log_series_terms(N).sum())
    lo = tables.a1 * (partial + 1.0 / math.log(N + 1))
    hi = tables.a1 * (partial + 1.0 / math.log(N))
    dev = max(abs(lo - 0.5), abs(hi - 0.5))
    return AuditRecord("series_sum", dev, 1e-6, 0.0, {"low": lo, "high": hi})


def normalization_record(tables: WeightTables, gamma: float = 1.0) -> AuditRecord:
    """``|int w_gamma - 1|`` from an adaptive-quadrature route independent of the calibration grid."""
    from scipy import integrate

    total = 0.0
    edges = np.arange(0.0, tables.grid_T + 1e-9, 25.0) / gamma
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda s: float(tables.w(s, gamma)), lo, hi, limit=200,
                                epsabs=1e-14, epsrel=1e-12)
        total += val
    total = 2.0 * (total + tables.far_tail / 1.0)
    return AuditRecord("w_normalization", abs(total - 1.0), 1e-6, 0.0, {"gamma": gamma, "integral": total})


def fourier_support_audit(tables: WeightTables, gamma: float = 1.0, k_grid=None,
                          delta: float = 0.05, tol: float = 1e-4) -> list[AuditRecord]:
    """Transform values outside ``[-gamma (1+delta), gamma (1+delta)]`` and the checks at ``k = 0``."""
    if k_grid is None:
        k_grid = np.linspace(gamma * (1 + delta), 10.0 * gamma, 200)
    k_grid = np.asarray(k_grid, dtype=float)
    if np.any(np.abs(k_grid) < gamma * (1 + delta)):
        raise DomainError("k_grid must avoid the open band (-gamma(1+delta), gamma(1+delta))")
    wh = np.asarray(tables.w_hat(k_grid, gamma))
    Wh = np.asarray(tables.W_hat(k_grid, gamma))
    target = -1j / (SQRT_2PI * k_grid)
    rel = np.abs(Wh - target) / np.abs(target)
    return [
        AuditRecord("w_hat_outside_band", float(np.abs(wh).max()), tol, 0.0, {"gamma": gamma}),
        AuditRecord("w_hat_at_zero", abs(float(tables.w_hat(0.0, gamma)) - 1.0 / SQRT_2PI), 1e-6, 0.0),
        AuditRecord("W_hat_outside_band", float(rel.max()), tol, 0.0, {"gamma": gamma}),
    ]


def decay_audit(tables: WeightTables, gamma: float = 1.0, x_samples=None) -> list[AuditRecord]:
    """Tail integrals of ``w_gamma`` and ``W_gamma`` against their stretched-exponential bounds.

    Records compare logarithms, since both sides underflow for ``gamma x >= e^9``.
    """
    if x_samples is None:
        x_samples = E9 / gamma * np.array([1.0, 1.5, 2.0, 3.0, 5.0])
    out = []
    for x in np.asarray(x_samples, dtype=float):
        if gamma * x < E9 * (1 - 1e-12):
            raise DomainError("decay bounds need gamma x >= e^9")
        lw = tables.log_tail(x, gamma, 0)
        lW = tables.log_tail(x, gamma, 1)
        out.append(AuditRecord("w_tail_log", lw, log_tail_bound_w(x, gamma, tables), 0.0, {"x": float(x)}))
        out.append(AuditRecord("W_tail_log", lW, log_tail_bound_W(x, gamma, tables), 0.0, {"x": float(x)}))
    return out


def weight_table(tables: WeightTables, gamma: float, t_values) -> list[dict]:
    """Rows ``(t, w_gamma(t), W_gamma(t))`` for plotting."""
    t_values = np.asarray(t_values, dtype=float)
    w = np.atleast_1d(tables.w(t_values, gamma))
    W = np.atleast_1d(tables.W(t_values, gamma))
    return [{"t": float(t), "w_gamma": float(a), "W_gamma": float(b)} for t, a, b in zip(t_values, w, W)]


__all__ = [
    "WeightTables", "constants", "series_sum_record", "series_tail", "f_b", "pointwise_bound", "log_tail_bound_w",
    "log_tail_bound_W", "normalization_record", "fourier_support_audit", "decay_audit", "weight_table",
]
