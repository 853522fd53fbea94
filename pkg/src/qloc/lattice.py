"""Finite metric spaces: integer boxes, balls, inflations and ball-growth audits."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import CapacityError, DomainError

SITE_CAP = 4096


class MetricSpace:
    """Finite set of sites with a dense symmetric distance table.

    Sites keep the order they were given in; that order is the global
    tensor-product order used by the operator algebra.
    """

    def __init__(self, sites: Sequence[Hashable], dist: np.ndarray, dim: int | None = None):
        sites = tuple(sites)
        dist = np.asarray(dist, dtype=float)
        n = len(sites)
        if dist.shape != (n, n):
            raise DomainError(f"distance table has shape {dist.shape}, expected {(n, n)}")
        if len(set(sites)) != n:
            raise DomainError("site ids must be unique")
        self.sites = sites
        self.dist = dist
        self.dist.setflags(write=False)
        self.dim = dim
        self._index = {s: i for i, s in enumerate(sites)}

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, x) -> bool:
        return x in self._index

    def __repr__(self) -> str:
        return f"MetricSpace({len(self)} sites, dim={self.dim})"

    def index(self, x) -> int:
        try:
            return self._index[x]
        except (KeyError, TypeError):
            raise DomainError(f"unknown site {x!r}") from None

    def indices(self, X: Iterable) -> np.ndarray:
        return np.array(sorted(self.index(x) for x in X), dtype=int)

    def ordered(self, X: Iterable) -> tuple:
        """Return the sites of ``X`` in global order."""
        return tuple(self.sites[i] for i in self.indices(X))

    def d(self, x, y) -> float:
        return float(self.dist[self.index(x), self.index(y)])

    def set_distance(self, X: Iterable, Y: Iterable) -> float:
        ix, iy = self.indices(X), self.indices(Y)
        if len(ix) == 0 or len(iy) == 0:
            return float("inf")
        return float(self.dist[np.ix_(ix, iy)].min())

    def diameter(self, X: Iterable | None = None) -> float:
        ix = np.arange(len(self)) if X is None else self.indices(X)
        if len(ix) == 0:
            return 0.0
        return float(self.dist[np.ix_(ix, ix)].max())

    def ball(self, x, n: float) -> frozenset:
        row = self.dist[self.index(x)]
        return frozenset(self.sites[i] for i in np.flatnonzero(row <= n))

    def inflate(self, X: Iterable, n: float) -> frozenset:
        ix = self.indices(X)
        if len(ix) == 0:
            return frozenset()
        near = (self.dist[ix] <= n).any(axis=0)
        return frozenset(self.sites[i] for i in np.flatnonzero(near))

    def check_metric(self, atol: float = 0.0) -> float:
        """Largest violation of symmetry, identity or the triangle inequality."""
        D = self.dist
        worst = float(np.abs(D - D.T).max(initial=0.0))
        offdiag = D[~np.eye(len(self), dtype=bool)]
        if offdiag.size and offdiag.min() <= 0:
            worst = max(worst, 1.0 - float(offdiag.min()))
        worst = max(worst, float(np.abs(np.diag(D)).max(initial=0.0)))
        for k in range(len(self)):
            tri = D - (D[:, [k]] + D[[k], :])
            worst = max(worst, float(tri.max()))
        return worst if worst > atol else 0.0


def build_box(nu: int, lengths: Sequence[int], metric: str = "l1", site_cap: int = SITE_CAP) -> MetricSpace:
    """Integer box ``prod(range(L))`` with the l1 metric.

    One-dimensional boxes use integer site ids, higher dimensions use tuples.
    """
    if metric != "l1":
        raise DomainError(f"unsupported metric {metric!r}")
    lengths = [int(L) for L in lengths]
    if nu < 1 or len(lengths) != nu or min(lengths) < 1:
        raise DomainError(f"need {nu} positive lengths, got {lengths}")
    count = int(np.prod(lengths))
    if count > site_cap:
        raise CapacityError(f"box with {count} sites exceeds site cap {site_cap}")
    coords = np.array(list(itertools.product(*(range(L) for L in lengths))), dtype=int)
    dist = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=2)
    sites = [int(c[0]) for c in coords] if nu == 1 else [tuple(int(v) for v in c) for c in coords]
    return MetricSpace(sites, dist, dim=nu)


def from_table(sites: Sequence[Hashable], dist, dim: int | None = None) -> MetricSpace:
    G = MetricSpace(sites, dist, dim)
    if G.check_metric(1e-12) > 0:
        raise DomainError("distance table is not a metric")
    return G


@dataclass(frozen=True)
class RegularityReport:
    kappa: float
    nu: float
    max_violation: float
    argmax: tuple = ()


def regularity_audit(G: MetricSpace, nu: float) -> RegularityReport:
    """Smallest kappa with ``|b_x(n)| <= kappa n^nu`` over all sites and integer radii."""
    if nu < 0:
        raise DomainError("nu must be non-negative")
    top = max(1, int(np.ceil(G.diameter())))
    radii = np.arange(1, top + 1)
    kappa, arg = 0.0, ()
    for i in range(len(G)):
        sizes = np.array([(G.dist[i] <= n).sum() for n in radii])
        ratios = sizes / radii.astype(float) ** nu
        k = int(ratios.argmax())
        if ratios[k] > kappa:
            kappa, arg = float(ratios[k]), (G.sites[i], int(radii[k]))
    return RegularityReport(kappa=kappa, nu=float(nu), max_violation=0.0, argmax=arg)
