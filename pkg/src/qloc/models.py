"""Model presets: transverse-field Ising, classical Ising, XY and random local interactions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .algebra import SX, SY, SZ, random_hermitian
from .errors import ConfigurationError
from .interactions import Interaction, as_schedule
from .lattice import MetricSpace, build_box


def _bonds(G: MetricSpace, radius: float = 1.0):
    """Unordered site pairs at distance in ``(0, radius]``, in global order."""
    out = []
    for i, j in itertools.combinations(range(len(G)), 2):
        if 0 < G.dist[i, j] <= radius:
            out.append((G.sites[i], G.sites[j]))
    return out


def tfi(G: MetricSpace, J=1.0, h=1.0, name: str = "tfi") -> Interaction:
    """``-J sum_<xy> Z_x Z_y - h sum_x X_x`` over nearest-neighbour bonds of ``G``."""
    J, h = as_schedule(J), as_schedule(h)
    zz = np.kron(SZ, SZ)
    terms = [((x, y), -zz, J) for x, y in _bonds(G)]
    terms += [((x,), -SX, h) for x in G.sites]
    return Interaction.from_terms(terms, name=name)


def classical_ising(G: MetricSpace, J=1.0, name: str = "classical_ising") -> Interaction:
    """``-J sum_<xy> Z_x Z_y``; two-fold degenerate ground space on open boundaries."""
    J = as_schedule(J)
    zz = np.kron(SZ, SZ)
    return Interaction.from_terms([((x, y), -zz, J) for x, y in _bonds(G)], name=name)


def xy(G: MetricSpace, Jx=1.0, Jy=1.0, h=0.0, name: str = "xy") -> Interaction:
    """``-sum_<xy> (Jx X_x X_y + Jy Y_x Y_y) - h sum_x Z_x``."""
    Jx, Jy, h = as_schedule(Jx), as_schedule(Jy), as_schedule(h)
    xx, yy = np.kron(SX, SX), np.kron(SY, SY)
    terms = []
    for x, y in _bonds(G):
        terms.append(((x, y), -xx, Jx))
        terms.append(((x, y), -yy, Jy))
    terms += [((x,), -SZ, h) for x in G.sites]
    return Interaction.from_terms(terms, name=name)


def random_local(G: MetricSpace, interaction_range: float = 1.0, seed: int = 0,
                 decay: float = 1.0, name: str = "random_local") -> Interaction:
    """Random Hermitian one- and two-site terms; a pair at distance ``d`` has norm ``exp(-decay (d-1))``."""
    rng = np.random.default_rng(seed)
    terms = []
    for x in G.sites:
        M = random_hermitian(2, rng)
        terms.append(((x,), M / np.abs(np.linalg.eigvalsh(M)).max(), 1.0))
    for x, y in _bonds(G, interaction_range):
        M = random_hermitian(4, rng)
        scale = np.exp(-decay * (G.d(x, y) - 1.0))
        terms.append(((x, y), scale * M / np.abs(np.linalg.eigvalsh(M)).max(), 1.0))
    return Interaction.from_terms(terms, name=name)


@dataclass(frozen=True)
class Preset:
    name: str
    summary: str
    params: dict
    desk_sizes: tuple
    tags: tuple = field(default=())


CATALOG = {
    "tfi_chain": Preset("tfi_chain", "transverse-field Ising chain, -J ZZ - h X",
                        {"J": "schedule, default 1", "h": "schedule, default 1"}, (4, 6, 8, 10)),
    "classical_ising_chain": Preset("classical_ising_chain", "classical Ising chain, -J ZZ",
                                    {"J": "schedule, default 1"}, (4, 6, 8, 10),
                                    ("degenerate ground cluster",)),
    "xy": Preset("xy", "XY chain, -(Jx XX + Jy YY) - h Z",
                 {"Jx": "schedule, default 1", "Jy": "schedule, default 1", "h": "schedule, default 0"},
                 (4, 6, 8, 10)),
    "random_local": Preset("random_local", "random Hermitian one- and two-site terms",
                           {"range": "bond range, default 1", "seed": "integer seed, default 0",
                            "decay": "decay rate of bond norms, default 1"}, (4, 6, 8)),
}


def catalog() -> list[Preset]:
    return [CATALOG[k] for k in sorted(CATALOG)]


def build(preset: str, G: MetricSpace, **params) -> Interaction:
    """Instantiate a catalog preset on ``G``; schedules may be numbers or :class:`Schedule`."""
    if preset not in CATALOG:
        raise ConfigurationError(f"unknown preset {preset!r}; known: {sorted(CATALOG)}")
    unknown = set(params) - set(CATALOG[preset].params)
    if unknown:
        raise ConfigurationError(f"unknown parameters for {preset}: {sorted(unknown)}")
    if preset == "tfi_chain":
        return tfi(G, params.get("J", 1.0), params.get("h", 1.0), name=preset)
    if preset == "classical_ising_chain":
        return classical_ising(G, params.get("J", 1.0), name=preset)
    if preset == "xy":
        return xy(G, params.get("Jx", 1.0), params.get("Jy", 1.0), params.get("h", 0.0), name=preset)
    return random_local(G, float(params.get("range", 1.0)), int(params.get("seed", 0)),
                        float(params.get("decay", 1.0)), name=preset)


def chain(n: int) -> MetricSpace:
    return build_box(1, [n])
