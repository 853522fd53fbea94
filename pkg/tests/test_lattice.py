import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qloc.errors import CapacityError, DomainError
from qloc.lattice import build_box, from_table, regularity_audit


def brute_kappa(G, nu):
    best = 0.0
    for x in G.sites:
        for n in range(1, int(G.diameter()) + 1):
            size = sum(1 for y in G.sites if G.d(x, y) <= n)
            best = max(best, size / n**nu)
    return best


def test_chain_distances():
    G = build_box(1, [5])
    assert G.sites == (0, 1, 2, 3, 4)
    assert G.d(0, 4) == 4


def test_square_l1_distance():
    G = build_box(2, [2, 2])
    assert G.d((0, 0), (1, 1)) == 2


def test_three_site_distance_set():
    G = build_box(1, [3])
    assert set(np.unique(G.dist)) == {0.0, 1.0, 2.0}


def test_ball_examples():
    G = build_box(1, [5])
    assert G.ball(2, 1) == {1, 2, 3}
    assert G.ball(3, 0) == {3}


def test_ball_center_of_square():
    G = build_box(2, [5, 5])
    expected = {(x, y) for x in range(5) for y in range(5) if abs(x - 2) + abs(y - 2) <= 1}
    assert G.ball((2, 2), 1) == expected
    assert len(expected) == 5


def test_inflate_examples():
    G = build_box(1, [5])
    assert G.inflate({0, 4}, 1) == {0, 1, 3, 4}
    assert G.inflate({2}, 10) == set(G.sites)


@given(st.integers(1, 3), st.data())
def test_inflate_zero_is_identity_and_monotone(nu, data):
    lengths = [data.draw(st.integers(1, 4)) for _ in range(nu)]
    G = build_box(nu, lengths)
    X = data.draw(st.sets(st.sampled_from(G.sites), min_size=1))
    n = data.draw(st.integers(0, 4))
    assert G.inflate(X, 0) == frozenset(X)
    assert G.inflate(X, n) <= G.inflate(X, n + 1)
    # inflation is the union of balls
    assert G.inflate(X, n) == frozenset().union(*(G.ball(x, n) for x in X))


@given(st.integers(1, 3), st.data())
def test_box_is_a_metric(nu, data):
    lengths = [data.draw(st.integers(1, 4)) for _ in range(nu)]
    G = build_box(nu, lengths)
    assert G.check_metric() == 0.0
    coords = [s if isinstance(s, tuple) else (s,) for s in G.sites]
    for a, b in itertools.product(range(len(G)), repeat=2):
        assert G.dist[a, b] == sum(abs(u - v) for u, v in zip(coords[a], coords[b]))


def test_regularity_chain():
    G = build_box(1, [50])
    rep = regularity_audit(G, 1)
    assert rep.kappa == pytest.approx(brute_kappa(G, 1))
    assert rep.kappa == 3.0


def test_regularity_single_site():
    assert regularity_audit(build_box(1, [1]), 2.5).kappa == 1.0


def test_regularity_square():
    G = build_box(2, [7, 7])
    rep = regularity_audit(G, 2)
    assert rep.kappa == pytest.approx(brute_kappa(G, 2))
    # radius one forces kappa = 5; the ratio drops below 3 only from radius three on
    assert rep.kappa == 5.0
    for n in range(3, 13):
        assert len(G.ball((3, 3), n)) <= 3 * n**2


def test_errors():
    with pytest.raises(DomainError):
        build_box(2, [3])
    with pytest.raises(DomainError):
        build_box(1, [0])
    with pytest.raises(CapacityError):
        build_box(2, [100, 100])
    with pytest.raises(DomainError):
        from_table([0, 1, 2], [[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    with pytest.raises(DomainError):
        build_box(1, [3]).index(7)
