"""Dense operator algebra on tensor products of finite local spaces.

Operators carry their support; the tensor order inside a matrix is the sorted
order of the site ids.  For boxes built by :func:`qloc.lattice.build_box` this
is the lexicographic site order.
"""

from __future__ import annotations

import hashlib
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Mapping

import numpy as np

from .errors import AmbiguousCutError, CapacityError, ConfigurationError, DomainError, ValidationError

DIM_CAP = 4096
LOCAL_DIM = 2

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
PAULI = {"I": ID2, "X": SX, "Y": SY, "Z": SZ}


def _dims_for(sites, dims: Mapping | None) -> tuple[int, ...]:
    if dims is None:
        return (LOCAL_DIM,) * len(sites)
    return tuple(int(dims.get(s, LOCAL_DIM)) for s in sites)


def _check_cap(total: int, cap: int = DIM_CAP):
    if total > cap:
        raise CapacityError(f"Hilbert dimension {total} exceeds cap {cap}")


@dataclass(frozen=True)
class HilbertStructure:
    """Sites of a volume together with their local dimensions."""

    volume: tuple
    dims: tuple

    @classmethod
    def of(cls, volume: Iterable, dims: Mapping | None = None, cap: int = DIM_CAP):
        vol = tuple(sorted(volume))
        d = _dims_for(vol, dims)
        _check_cap(int(np.prod(d, dtype=np.int64)), cap)
        return cls(vol, d)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def dim_map(self) -> dict:
        return dict(zip(self.volume, self.dims))


class LocalOperator:
    """Square complex matrix acting on the sites in ``support``."""

    __slots__ = ("support", "matrix", "dims")

    def __init__(self, support: Iterable, matrix, dims: Iterable[int] | None = None):
        support = tuple(support)
        if list(support) != sorted(support) or len(set(support)) != len(support):
            raise DomainError("support must be strictly sorted")
        matrix = np.asarray(matrix, dtype=complex)
        dims = tuple(dims) if dims is not None else (LOCAL_DIM,) * len(support)
        total = int(np.prod(dims, dtype=np.int64))
        if matrix.shape != (total, total):
            raise DomainError(f"matrix shape {matrix.shape} does not match dims {dims}")
        self.support = support
        self.matrix = matrix
        self.dims = dims

    def __repr__(self):
        return f"LocalOperator(support={self.support}, dim={self.matrix.shape[0]})"

    @property
    def dim_map(self) -> dict:
        return dict(zip(self.support, self.dims))

    def adjoint(self) -> "LocalOperator":
        return LocalOperator(self.support, self.matrix.conj().T, self.dims)

    def _aligned(self, other: "LocalOperator"):
        dims = {**self.dim_map, **other.dim_map}
        vol = sorted(set(self.support) | set(other.support))
        return embed(self, vol, dims), embed(other, vol, dims)

    def __add__(self, other):
        a, b = self._aligned(other)
        return LocalOperator(a.support, a.matrix + b.matrix, a.dims)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return LocalOperator(a.support, a.matrix - b.matrix, a.dims)

    def __matmul__(self, other):
        a, b = self._aligned(other)
        return LocalOperator(a.support, a.matrix @ b.matrix, a.dims)

    def __mul__(self, k):
        return LocalOperator(self.support, k * self.matrix, self.dims)

    __rmul__ = __mul__

    def __neg__(self):
        return LocalOperator(self.support, -self.matrix, self.dims)


def operator(support: Iterable, matrix, dims: Mapping | None = None) -> LocalOperator:
    """Build a local operator from a matrix given in sorted-support order."""
    support = tuple(sorted(support))
    return LocalOperator(support, matrix, _dims_for(support, dims))


def product_operator(factors: Mapping) -> LocalOperator:
    """Tensor product of single-site matrices, ``{site: matrix}``."""
    sites = tuple(sorted(factors))
    mats = [np.asarray(factors[s], dtype=complex) for s in sites]
    if not mats:
        return LocalOperator((), np.ones((1, 1), dtype=complex), ())
    return LocalOperator(sites, reduce(np.kron, mats), tuple(m.shape[0] for m in mats))


def identity(support: Iterable, dims: Mapping | None = None) -> LocalOperator:
    support = tuple(sorted(support))
    d = _dims_for(support, dims)
    return LocalOperator(support, np.eye(int(np.prod(d, dtype=np.int64)), dtype=complex), d)


def _permute(matrix: np.ndarray, dims: tuple, order: list[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``k`` is old factor ``order[k]``."""
    n = len(dims)
    if order == list(range(n)):
        return matrix
    T = matrix.reshape(dims + dims)
    T = T.transpose(order + [n + k for k in order])
    total = matrix.shape[0]
    return T.reshape(total, total)


def embed(A: LocalOperator, volume: Iterable, dims: Mapping | None = None) -> LocalOperator:
    """``A`` tensored with the identity on ``volume`` minus its support."""
    vol = tuple(sorted(volume))
    if vol == A.support:
        return A
    sup = set(A.support)
    if not sup <= set(vol):
        raise DomainError(f"support {A.support} not contained in volume")
    dmap = {**({} if dims is None else dict(dims)), **A.dim_map}
    rest = [s for s in vol if s not in sup]
    rest_dims = _dims_for(rest, dmap)
    total = A.matrix.shape[0] * int(np.prod(rest_dims, dtype=np.int64))
    _check_cap(total)
    M = np.kron(A.matrix, np.eye(int(np.prod(rest_dims, dtype=np.int64)), dtype=complex))
    current = list(A.support) + rest
    cur_dims = tuple(A.dims) + rest_dims
    pos = {s: k for k, s in enumerate(current)}
    order = [pos[s] for s in vol]
    M = _permute(M, cur_dims, order)
    return LocalOperator(vol, M, tuple(cur_dims[k] for k in order))


def opnorm(A) -> float:
    """Largest singular value (through eigenvalues for Hermitian or skew-Hermitian input)."""
    M = A.matrix if isinstance(A, LocalOperator) else np.asarray(A)
    if M.size == 0:
        return 0.0
    Mh = M.conj().T
    if np.allclose(M, Mh, atol=1e-13, rtol=0):
        return float(np.abs(np.linalg.eigvalsh(M)).max())
    if np.allclose(M, -Mh, atol=1e-13, rtol=0):
        return float(np.abs(np.linalg.eigvalsh(1j * M)).max())
    return float(np.linalg.norm(M, 2))


def commutator(A, B):
    if isinstance(A, LocalOperator):
        return (A @ B) - (B @ A)
    return A @ B - B @ A


def is_hermitian(M, atol: float = 1e-10) -> bool:
    M = M.matrix if isinstance(M, LocalOperator) else np.asarray(M)
    return bool(np.abs(M - M.conj().T).max(initial=0.0) <= atol)


def check_hermitian(M, atol: float = 1e-10, what: str = "operator"):
    if not is_hermitian(M, atol):
        raise ValidationError(f"{what} is not Hermitian within {atol}")


# eigendecompositions --------------------------------------------------------

class _EigCache:
    """Small LRU cache keyed by a digest of the matrix bytes; optional disk layer."""

    def __init__(self, size: int = 64):
        self.size = size
        self._store: OrderedDict = OrderedDict()

    def key(self, M: np.ndarray) -> str:
        h = hashlib.sha1(np.ascontiguousarray(M).view(np.uint8))
        h.update(str(M.shape).encode())
        return h.hexdigest()

    def get(self, M: np.ndarray):
        k = self.key(M)
        hit = self._store.get(k)
        if hit is not None:
            self._store.move_to_end(k)
            return hit
        root = os.environ.get("QLOC_CACHE_DIR")
        path = os.path.join(root, f"eigh-{k}.npz") if root else None
        if path and os.path.exists(path):
            with np.load(path) as z:
                hit = (z["E"], z["V"])
        else:
            E, V = np.linalg.eigh(M)
            hit = (E, V)
            if path:
                os.makedirs(root, exist_ok=True)
                tmp = path + f".{os.getpid()}.tmp.npz"
                np.savez(tmp, E=E, V=V)
                os.replace(tmp, path)
        self._store[k] = hit
        if len(self._store) > self.size:
            self._store.popitem(last=False)
        return hit


_EIG = _EigCache()


def eigh(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix, cached."""
    M = H.matrix if isinstance(H, LocalOperator) else np.asarray(H, dtype=complex)
    return _EIG.get(M)


def unitary_exp(H, t: float = 1.0) -> np.ndarray:
    """``exp(-i t H)`` through the eigenbasis of Hermitian ``H``."""
    E, V = eigh(H)
    return (V * np.exp(-1j * t * E)) @ V.conj().T


def spectral_projection(H, interval: tuple[float, float], tol: float = 1e-9):
    """Orthogonal projector onto eigenvectors with eigenvalue in ``[a, b]``."""
    M = H.matrix if isinstance(H, LocalOperator) else np.asarray(H)
    check_hermitian(M)
    a, b = interval
    E, V = eigh(M)
    if np.any(np.abs(E - a) < tol) or np.any(np.abs(E - b) < tol):
        raise AmbiguousCutError(f"interval [{a}, {b}] cuts an eigenvalue within {tol}")
    sel = (E >= a) & (E <= b)
    P = V[:, sel] @ V[:, sel].conj().T
    if isinstance(H, LocalOperator):
        return LocalOperator(H.support, P, H.dims)
    return P


def polar_unitary(M: np.ndarray) -> np.ndarray:
    """Closest unitary to ``M`` in Frobenius norm (unitary polar factor)."""
    W, _, Vh = np.linalg.svd(M)
    return W @ Vh


# product states and localizers ------------------------------------------------

@dataclass
class ProductState:
    """Product of single-site density matrices."""

    factors: dict = field(default_factory=dict)

    def __post_init__(self):
        for s, r in self.factors.items():
            r = np.asarray(r, dtype=complex)
            if abs(np.trace(r) - 1) > 1e-12 or not is_hermitian(r, 1e-12):
                raise ValidationError(f"density matrix at {s!r} is not a unit-trace Hermitian matrix")
            if np.linalg.eigvalsh(r).min() < -1e-12:
                raise ValidationError(f"density matrix at {s!r} is not positive")
            self.factors[s] = r

    @classmethod
    def tracial(cls, sites: Iterable, dims: Mapping | None = None):
        sites = list(sites)
        return cls({s: np.eye(d, dtype=complex) / d for s, d in zip(sites, _dims_for(sites, dims))})

    @classmethod
    def pure(cls, sites: Iterable, level: int = 0, dims: Mapping | None = None):
        out = {}
        sites = list(sites)
        for s, d in zip(sites, _dims_for(sites, dims)):
            r = np.zeros((d, d), dtype=complex)
            r[level, level] = 1.0
            out[s] = r
        return cls(out)

    @classmethod
    def random(cls, sites: Iterable, rng: np.random.Generator, dims: Mapping | None = None):
        """Full-rank random density matrices at every site."""
        out = {}
        sites = list(sites)
        for s, d in zip(sites, _dims_for(sites, dims)):
            M = random_matrix(d, rng)
            r = M @ M.conj().T
            out[s] = r / np.trace(r).real
        return cls(out)

    def __getitem__(self, site):
        try:
            return self.factors[site]
        except KeyError:
            raise ConfigurationError(f"no density matrix for site {site!r}") from None


def partial_expectation(A: LocalOperator, X: Iterable, rho: ProductState) -> LocalOperator:
    """``(id_X (x) rho_rest)(A)`` as an operator on ``X`` intersected with the support."""
    Xs = set(X)
    keep = [s for s in A.support if s in Xs]
    traced = [k for k, s in enumerate(A.support) if s not in Xs]
    if not traced:
        return A
    n = len(A.support)
    T = A.matrix.reshape(A.dims + A.dims)
    out_axes = list(range(n))
    in_axes = list(range(n, 2 * n))
    ops = [T, out_axes + in_axes]
    for k in traced:
        # contract out index k with in index k through rho: sum_ab T[a..,b..] rho[b, a]
        ops += [rho[A.support[k]], [in_axes[k], out_axes[k]]]
    kept = [k for k in range(n) if A.support[k] in Xs]
    result_axes = [out_axes[k] for k in kept] + [in_axes[k] for k in kept]
    R = np.einsum(*ops, result_axes, optimize=True)
    d = tuple(A.dims[k] for k in kept)
    total = int(np.prod(d, dtype=np.int64))
    return LocalOperator(tuple(keep), np.asarray(R).reshape(total, total), d)


def conditional_expectation(A: LocalOperator, X: Iterable, rho: ProductState,
                            restrict: bool = False) -> LocalOperator:
    """Localize ``A`` onto ``X`` by averaging the remaining sites against ``rho``.

    By default the result is re-embedded into the support of ``A``.
    """
    R = partial_expectation(A, X, rho)
    if restrict:
        return R
    return embed(R, A.support, A.dim_map)


def local_decomposition(A: LocalOperator, X: Iterable, n: int, rho: ProductState, G,
                        restrict: bool = False) -> LocalOperator:
    """Shell ``n`` of the telescoping decomposition of ``A`` around ``X``.

    Shell 0 is the localization onto ``X``; shell ``n >= 1`` is the difference of
    the localizations onto ``X(n)`` and ``X(n-1)``, all intersected with the
    support of ``A``.
    """
    if n < 0:
        raise DomainError("shell index must be non-negative")
    vol = set(A.support)
    inner = set(G.inflate(X, n - 1)) & vol if n >= 1 else None
    outer = (set(G.inflate(X, n)) if n >= 1 else set(X)) & vol
    P_outer = partial_expectation(A, outer, rho)
    if n == 0:
        return P_outer if restrict else embed(P_outer, A.support, A.dim_map)
    P_inner = partial_expectation(A, inner, rho)
    target = P_outer.support if restrict else A.support
    dm = A.dim_map
    return LocalOperator(tuple(sorted(target)),
                         embed(P_outer, target, dm).matrix - embed(P_inner, target, dm).matrix,
                         _dims_for(tuple(sorted(target)), dm))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    M = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (M + M.conj().T) / 2


def random_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


# localizer audits ------------------------------------------------------------------

def _random_subset(sites: list, rng: np.random.Generator, min_size: int = 1) -> tuple:
    k = int(rng.integers(min_size, len(sites) + 1))
    return tuple(sorted(rng.choice(len(sites), size=k, replace=False).tolist()))


def localizer_audit(G, volume: Iterable, rho: ProductState, rng: np.random.Generator,
                    trials: int = 5, tol: float = 1e-12) -> list:
    """Consistency of the localizing maps on random operators over ``volume``.

    Checks, for random regions and operators: fixed points on local operators,
    compatibility with restriction to subvolumes, the intersection rule in both
    orders, the tower rule, adjoint compatibility and the exact telescoping sum.
    Returns :class:`~qloc.audit.AuditRecord` entries whose ``lhs`` is the
    largest entry difference.
    """
    from .audit import AuditRecord

    vol = tuple(sorted(volume))
    dims = dict(zip(vol, _dims_for(vol, None)))
    D = int(np.prod([dims[s] for s in vol]))
    _check_cap(D)
    worst = {k: 0.0 for k in ("fixed_point", "restriction", "intersection", "tower", "adjoint", "telescoping")}

    def diff(a, b):
        return float(np.abs(embed(a, vol, dims).matrix - embed(b, vol, dims).matrix).max())

    def pick(idx):
        return tuple(vol[i] for i in idx)

    def Pi(A, X):
        return conditional_expectation(A, X, rho)

    sites = list(vol)
    for _ in range(trials):
        A = LocalOperator(vol, random_matrix(D, rng), [dims[s] for s in vol])
        X = pick(_random_subset(sites, rng))
        Y = pick(_random_subset(sites, rng))
        sub = pick(_random_subset(sites, rng))
        # (i) operators already supported in X are fixed
        dX = [dims[s] for s in X]
        AX = LocalOperator(X, random_matrix(int(np.prod(dX)), rng), dX)
        worst["fixed_point"] = max(worst["fixed_point"], diff(Pi(embed(AX, vol, dims), X), AX))
        # (ii) restriction to a subvolume
        dS = [dims[s] for s in sub]
        AS = LocalOperator(sub, random_matrix(int(np.prod(dS)), rng), dS)
        lhs = Pi(embed(AS, vol, dims), X)
        rhs = Pi(AS, tuple(s for s in X if s in sub))
        worst["restriction"] = max(worst["restriction"], diff(lhs, rhs))
        # (iii) both orders equal the localization onto the intersection
        inter = tuple(s for s in X if s in Y)
        target = Pi(A, inter)
        worst["intersection"] = max(worst["intersection"], diff(Pi(Pi(A, Y), X), target),
                                    diff(Pi(Pi(A, X), Y), target))
        # (iv) tower rule for X inside a larger region
        big = tuple(sorted(set(X) | set(sub)))
        worst["tower"] = max(worst["tower"], diff(Pi(Pi(A, big), X), Pi(A, X)))
        # (v) adjoints
        worst["adjoint"] = max(worst["adjoint"], diff(Pi(A, X).adjoint(), Pi(A.adjoint(), X)))
        # telescoping over shells around X
        total = np.zeros((D, D), dtype=complex)
        n = 0
        while True:
            total += embed(local_decomposition(A, X, n, rho, G), vol, dims).matrix
            if set(G.inflate(X, n)) >= set(vol):
                break
            n += 1
        worst["telescoping"] = max(worst["telescoping"], float(np.abs(total - A.matrix).max()))
    return [AuditRecord(k, v, 0.0, tol) for k, v in worst.items()]


def engineered_epsilon_audit(volume: Iterable, X: Iterable, epsilon: float, rho: ProductState,
                             rng: np.random.Generator, trials: int = 5, tol: float = 1e-10) -> list:
    """Localization error of ``A = A0 (x) 1 + epsilon C`` with ``||C|| = 1/2``.

    Such ``A`` satisfies ``||[A, B]|| <= epsilon ||B||`` for every ``B`` outside
    ``X``, so the localization error must stay below ``2 epsilon``.
    """
    from .audit import AuditRecord

    vol = tuple(sorted(volume))
    X = tuple(sorted(X))
    dims = dict(zip(vol, _dims_for(vol, None)))
    D = int(np.prod([dims[s] for s in vol]))
    dX = [dims[s] for s in X]
    records = []
    for k in range(trials):
        A0 = embed(LocalOperator(X, random_matrix(int(np.prod(dX)), rng), dX), vol, dims).matrix
        C = random_matrix(D, rng)
        C *= 0.5 / opnorm(C)
        A = LocalOperator(vol, A0 + epsilon * C, [dims[s] for s in vol])
        err = opnorm(A.matrix - conditional_expectation(A, X, rho).matrix)
        records.append(AuditRecord("engineered_epsilon", err, 2.0 * epsilon, tol, {"trial": k, "epsilon": epsilon}))
    return records
