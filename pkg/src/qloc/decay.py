"""Decay functions, weights, their lattice constants, moments and transforms.

A decay function is a non-increasing map ``[0, inf) -> (0, inf)``.  On a finite
metric space its two defining constants (the uniform sum and the convolution
constant) are computed exactly by enumeration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DivergenceError, DomainError, PreconditionError, ValidationError
from .lattice import MetricSpace, regularity_audit

MOMENT_TRUNCATION = 10**6


class Weight:
    """Non-negative, non-decreasing, subadditive weight ``g``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], kind: str, **params):
        self._fn = fn
        self.kind = kind
        self.params = params

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self._fn(r)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"Weight.{self.kind}({args})"

    @classmethod
    def zero(cls):
        return cls(lambda r: np.zeros_like(r), "zero")

    @classmethod
    def power(cls, a: float = 1.0, theta: float = 1.0):
        """``g(r) = a r^theta`` with ``0 <= theta <= 1``."""
        if a < 0 or not 0 <= theta <= 1:
            raise DomainError("power weight needs a >= 0 and theta in [0, 1]")
        return cls(lambda r: a * np.power(r, theta), "power", a=a, theta=theta)

    @classmethod
    def log(cls, a: float = 1.0):
        """``g(r) = a ln(1 + r)``."""
        if a < 0:
            raise DomainError("log weight needs a >= 0")
        return cls(lambda r: a * np.log1p(r), "log", a=a)

    @classmethod
    def capped_ratio(cls, p: float = 2.0, a: float = 1.0):
        """``a e^p / p^p`` up to ``e^p``, then ``a r / ln(r)^p``."""
        if p <= 0 or a < 0:
            raise DomainError("capped_ratio needs p > 0 and a >= 0")
        cut = math.exp(p)
        floor = cut / p**p

        def fn(r):
            r = np.asarray(r, dtype=float)
            safe = np.maximum(r, cut)
            return a * np.where(r <= cut, floor, safe / np.log(safe) ** p)

        return cls(fn, "capped_ratio", p=p, a=a)

    def scaled(self, a: float) -> "Weight":
        """``a * g``; still a weight for ``a >= 0``."""
        if a < 0:
            raise DomainError("scale must be non-negative")
        inner = self._fn
        return Weight(lambda r: a * inner(r), self.kind, **{**self.params, "scale": a})

    def subadditivity_violation(self, samples: int = 2000, seed: int = 0, rmax: float = 1e3) -> float:
        """Largest ``g(r+s) - g(r) - g(s)`` and monotonicity defect on random pairs."""
        rng = np.random.default_rng(seed)
        r = rng.uniform(0, rmax, samples) * rng.uniform(0, 1, samples)
        s = rng.uniform(0, rmax, samples) * rng.uniform(0, 1, samples)
        sub = np.max(self(r + s) - self(r) - self(s))
        grid = np.linspace(0, rmax, 4001)
        vals = self(grid)
        mono = np.max(np.maximum(vals[:-1] - vals[1:], 0.0))
        neg = np.max(np.maximum(-vals, 0.0))
        return float(max(sub, mono, neg))


class DecayFunction:
    """Evaluable non-increasing decay profile.

    ``power`` and ``weighted`` kinds remember their base exponent and weight so
    that dilation and shift transforms can check their preconditions.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], kind: str, *,
                 base_power: float | None = None, weight: Weight | None = None,
                 label: str = "", allow_zero: bool = False):
        self._fn = fn
        self.kind = kind
        self.base_power = base_power
        self.weight = weight
        self.label = label or kind
        self.allow_zero = allow_zero
        self._moments: dict = {}

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.asarray(self._fn(r), dtype=float)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"DecayFunction({self.label})"

    # constructors -------------------------------------------------------
    @classmethod
    def power(cls, p: float):
        """``(1 + r)^-p``."""
        if p <= 0:
            raise DomainError("power decay needs p > 0")
        return cls(lambda r: (1.0 + r) ** (-p), "power", base_power=p, weight=Weight.zero(),
                   label=f"(1+r)^-{p:g}")

    @classmethod
    def exponential(cls, a: float):
        """``e^{-a r}``; handy as a decay profile for moments."""
        return cls(lambda r: np.exp(-a * r), "exponential", label=f"exp(-{a:g}r)")

    @classmethod
    def geometric(cls, base: float = 2.0):
        return cls(lambda r: base ** (-r), "geometric", label=f"{base:g}^-r")

    @classmethod
    def tabulated(cls, grid, values, *, tail: float = 0.0, allow_zero: bool = True):
        """Step (previous-value) interpolation of a non-increasing table.

        Values are taken at ``grid[k] <= r < grid[k+1]``; beyond the last grid
        point the function equals ``tail``.
        """
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) == 0:
            raise DomainError("grid and values must be equal-length 1-d arrays")
        if grid[0] != 0 or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must start at 0 and increase strictly")
        if np.any(np.diff(values) > 0) or values[-1] < tail:
            raise ValidationError("tabulated values must be non-increasing")
        if not allow_zero and (values.min() <= 0 or tail <= 0):
            raise ValidationError("tabulated F-function values must be positive")
        padded = np.append(values, tail)
        last = grid[-1]

        def fn(r):
            r = np.asarray(r, dtype=float)
            k = np.searchsorted(grid, r, side="right") - 1
            k = np.where(r > last, len(grid), np.clip(k, 0, len(grid) - 1))
            return padded[k]

        return cls(fn, "tabulated", label="tabulated", allow_zero=allow_zero)

    @classmethod
    def from_callable(cls, fn, label: str = "custom", allow_zero: bool = False):
        return cls(lambda r: fn(np.asarray(r, dtype=float)), "custom", label=label,
                   allow_zero=allow_zero)

    def scaled(self, k: float) -> "DecayFunction":
        inner = self._fn
        return DecayFunction(lambda r: k * inner(r), self.kind, base_power=self.base_power,
                             weight=self.weight, label=f"{k:g}*{self.label}",
                             allow_zero=self.allow_zero)

    def floored(self) -> "DecayFunction":
        """``r -> F(floor(r))``."""
        inner = self._fn
        return DecayFunction(lambda r: inner(np.floor(r)), "floored", label=f"{self.label}(floor r)",
                             allow_zero=self.allow_zero)

    def monotonicity_violation(self, grid=None) -> float:
        grid = np.linspace(0, 200, 20001) if grid is None else np.asarray(grid, dtype=float)
        vals = self(grid)
        worst = float(np.max(np.maximum(vals[1:] - vals[:-1], 0.0), initial=0.0))
        if not self.allow_zero and vals.min() <= 0:
            worst = max(worst, float(-vals.min()) + 1e-300)
        return worst


def weighted_f(F: DecayFunction, g: Weight, check: bool = True) -> DecayFunction:
    """``r -> e^{-g(r)} F(r)``."""
    if check:
        bad = g.subadditivity_violation()
        if bad > 1e-9:
            raise ValidationError(f"weight {g!r} fails subadditivity/monotonicity by {bad:.3g}")
    base = F._fn
    if F.weight is not None and F.weight.kind != "zero":
        prev = F.weight
        total = Weight(lambda r: prev._fn(r) + g._fn(r), "sum", first=prev, second=g)
    else:
        total = g
    return DecayFunction(lambda r: np.exp(-g._fn(r)) * base(r), "weighted",
                         base_power=F.base_power, weight=total,
                         label=f"exp(-{g!r})*{F.label}")


def normalized(F: DecayFunction, G: MetricSpace) -> DecayFunction:
    """Rescale so that the convolution constant on ``G`` equals one."""
    return F.scaled(1.0 / f_convolution_constant(F, G))


# constants ----------------------------------------------------------------

@dataclass(frozen=True)
class FConstants:
    uniform_norm: float
    conv_constant: float
    argmax_norm: object
    argmax_conv: tuple


def _matrix(F: DecayFunction, G: MetricSpace) -> np.ndarray:
    return np.asarray(F(G.dist), dtype=float).reshape(G.dist.shape)


def f_uniform_norm(F: DecayFunction, G: MetricSpace) -> float:
    """``sup_x sum_y F(d(x, y))`` over the finite space."""
    return float(_matrix(F, G).sum(axis=1).max())


def f_convolution_constant(F: DecayFunction, G: MetricSpace) -> float:
    """``max_{x,y} sum_z F(d(x,z)) F(d(z,y)) / F(d(x,y))``."""
    return f_constants(F, G).conv_constant


def f_constants(F: DecayFunction, G: MetricSpace) -> FConstants:
    M = _matrix(F, G)
    rows = M.sum(axis=1)
    i = int(rows.argmax())
    conv = M @ M
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(M > 0, conv / M, np.where(conv > 0, np.inf, 0.0))
    k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return FConstants(uniform_norm=float(rows[i]), conv_constant=float(ratio[k]),
                      argmax_norm=G.sites[i], argmax_conv=(G.sites[k[0]], G.sites[k[1]]))


# moments ------------------------------------------------------------------

@dataclass(frozen=True)
class Moment:
    value: float
    tail: float

    def __float__(self):
        return self.value


def _power_exponent(Gf: DecayFunction) -> float | None:
    """Exact polynomial decay rate when the profile is a pure power, possibly log-weighted."""
    if Gf.base_power is None:
        return None
    w = Gf.weight
    if w is None or w.kind == "zero":
        return Gf.base_power
    if w.kind == "log":
        return Gf.base_power + w.params["a"]
    if w.kind == "power" and (w.params["a"] == 0 or w.params["theta"] == 0):
        return Gf.base_power
    return None


def _moment_table(Gf: DecayFunction, p: float, N: int) -> tuple[np.ndarray, float]:
    key = (float(p), int(N))
    hit = Gf._moments.get(key)
    if hit is not None:
        return hit
    exponent = _power_exponent(Gf)
    if exponent is not None and exponent - p <= 1.0:
        raise DivergenceError(f"moment of order {p} diverges for decay (1+r)^-{exponent:g}")
    n = np.arange(N + 1, dtype=float)
    terms = (1.0 + n) ** p * np.asarray(Gf(n), dtype=float)
    if not np.all(np.isfinite(terms)):
        raise DivergenceError("moment terms are not finite")
    # n * term non-decreasing means the terms are no smaller than c / n
    last = ((1.0 + n) * terms)[N // 10:]
    if last[-1] > 0 and np.all(np.diff(last) >= 0):
        raise DivergenceError(f"moment of order {p} does not decay over the last decade")
    suffix = np.cumsum(terms[::-1])[::-1]
    tail = _tail_estimate(Gf, p, N) if terms[-1] > 0 else 0.0
    Gf._moments[key] = (suffix, tail)
    return suffix, tail


def _tail_estimate(Gf: DecayFunction, p: float, N: int) -> float:
    """Integral comparison for ``sum_{n > N} (1+n)^p G(n)``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda x: (1.0 + x) ** p * float(Gf(x)), N, np.inf, limit=200)
    return float(val)


def moment(Gf: DecayFunction, p: float, m: float = 0.0, N: int = MOMENT_TRUNCATION,
           with_tail: bool = False):
    """``M_p^G(m) = sum_{n >= floor(m)} (1+n)^p G(n)``, truncated at ``N``.

    Returns a float, or a :class:`Moment` carrying the integral tail estimate
    when ``with_tail`` is set.
    """
    if p < 0 or m < 0:
        raise DomainError("moment needs p >= 0 and m >= 0")
    suffix, tail = _moment_table(Gf, p, N)
    k = int(math.floor(m))
    value = float(suffix[k]) if k <= N else 0.0
    return Moment(value, tail) if with_tail else value


# transforms ---------------------------------------------------------------

@dataclass(frozen=True)
class TransformBounds:
    norm_bound: float
    conv_bound: float

    def check(self, F: DecayFunction, G: MetricSpace, rtol: float = 1e-12) -> FConstants:
        """Brute constants of ``F`` on ``G``; raises if either bound is exceeded."""
        c = f_constants(F, G)
        if c.uniform_norm > self.norm_bound * (1 + rtol):
            raise ValidationError(f"uniform norm {c.uniform_norm} exceeds {self.norm_bound}")
        if c.conv_constant > self.conv_bound * (1 + rtol):
            raise ValidationError(f"convolution constant {c.conv_constant} exceeds {self.conv_bound}")
        return c


def _kappa_nu(G: MetricSpace, nu: float | None, kappa: float | None) -> tuple[float, float]:
    if nu is None:
        if G.dim is None:
            raise PreconditionError("pass nu for metric spaces without a box dimension")
        nu = float(G.dim)
    if kappa is None:
        kappa = regularity_audit(G, nu).kappa
    return float(kappa), float(nu)


def transform_step(F: DecayFunction, a: float, c: float, G: MetricSpace,
                   nu: float | None = None, kappa: float | None = None):
    """Replace ``F`` by the constant ``c`` on ``[0, a]``.

    Returns the new function and its bound pair.  The ball around each site of
    radius ``a`` is counted with ``kappa * max(a, 1)^nu`` so the bound also
    covers radii below one.
    """
    if a < 0:
        raise DomainError("a must be non-negative")
    Fa = F(a)
    if c < Fa:
        raise PreconditionError(f"c={c} must be at least F(a)={Fa}")
    kappa, nu = _kappa_nu(G, nu, kappa)
    base = F._fn
    Ft = DecayFunction(lambda r: np.where(r <= a, c, base(r)), "step",
                       label=f"step({F.label}, a={a:g}, c={c:g})")
    consts = f_constants(F, G)
    norm_bound = c * kappa * max(a, 1.0) ** nu + consts.uniform_norm
    conv_bound = max(c, float(F(0.0))) * c * consts.conv_constant / Fa**2
    return Ft, TransformBounds(norm_bound, conv_bound)


def _require_weighted_power(F: DecayFunction):
    if F.base_power is None or F.weight is None or F.base_power < 1:
        raise TypeError("transform needs F = exp(-g) (1+r)^-p with p >= 1")


def transform_dilate(F: DecayFunction, epsilon: float, G: MetricSpace):
    """``r -> F(epsilon r)`` with its bound pair."""
    _require_weighted_power(F)
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    p = F.base_power
    base = F._fn
    Ft = DecayFunction(lambda r: base(epsilon * np.asarray(r, dtype=float)), "weighted",
                       base_power=None, label=f"{F.label}(eps={epsilon:g} r)")
    norm0 = f_uniform_norm(DecayFunction.power(p), G)
    norm_bound = max(1.0, epsilon ** (-p)) * norm0
    conv_bound = 2.0**p * f_uniform_norm(Ft, G)
    return Ft, TransformBounds(norm_bound, conv_bound)


def transform_shift(F: DecayFunction, a: float, G: MetricSpace):
    """``F(0)`` on ``[0, a]`` and ``F(r - a)`` beyond, with its bound pair."""
    _require_weighted_power(F)
    if a < 0:
        raise DomainError("shift must be non-negative")
    base = F._fn
    F0 = float(F(0.0))
    Ft = DecayFunction(lambda r: np.where(r <= a, F0, base(np.maximum(r - a, 0.0))), "shifted",
                       label=f"{F.label}(r-{a:g})")
    factor = max(1.0, F0) / float(F(a))
    consts = f_constants(F, G)
    return Ft, TransformBounds(factor * consts.uniform_norm, factor**2 * consts.conv_constant)


def transform_shift_dilate(F: DecayFunction, G: MetricSpace, *, epsilon: float | None = None,
                           shift: float | None = None):
    """Dispatch to the dilation or the shift transform (exactly one must be given)."""
    if (epsilon is None) == (shift is None):
        raise DomainError("give exactly one of epsilon or shift")
    if epsilon is not None:
        return transform_dilate(F, epsilon, G)
    return transform_shift(F, shift, G)


def tail_sum_profile(F: DecayFunction, G: MetricSpace) -> DecayFunction:
    """``r -> sup_x sum_{y: d(x,y) >= r} F(d(x,y))`` as a step function on ``G``.

    This is the decay profile that turns a double-sum commutator bound into the
    ``|X| G(d)`` form.
    """
    M = _matrix(F, G)
    top = int(math.ceil(G.diameter()))
    grid = np.arange(top + 1, dtype=float)
    vals = np.array([(M * (G.dist >= r)).sum(axis=1).max() for r in grid])
    # profile uses d >= r, and the step function below covers non-integer r too
    def fn(r):
        r = np.asarray(r, dtype=float)
        k = np.ceil(r).astype(int)
        return np.where(k > top, 0.0, vals[np.clip(k, 0, top)])

    return DecayFunction(fn, "tabulated", label=f"tail({F.label})", allow_zero=True)
