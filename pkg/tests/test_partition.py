import itertools

import pytest
from hypothesis import given, settings, strategies as st

from csbp import partition as P
from csbp.errors import DomainError

CP = P.ConsecutivePartition


def sizes_strategy(min_blocks=1, max_blocks=8, max_size=5):
    return st.lists(st.integers(1, max_size), min_size=min_blocks, max_size=max_blocks)


def test_coag_examples():
    c = CP((2, 1, 3))
    assert P.coag(c, P.zero(3)) == c
    assert P.coag(c, P.one(3)) == CP((6,))
    assert P.coag(c, CP((2, 1))) == CP((3, 3))


def test_coag_precondition():
    with pytest.raises(DomainError):
        P.coag(CP((1, 1, 1)), CP((2,)))


def test_coag_with_infinite_block():
    assert P.coag(CP((1, 2, 3, 4)), CP((1, P.INF))) == CP((1, 9))


def test_restrict_examples():
    assert P.restrict(CP((2, 1, 3)), 4) == CP((2, 1, 1))
    assert P.restrict(CP((2, 1, 3)), 6) == CP((2, 1, 3))
    assert P.restrict(CP((5,)), 2) == CP((2,))
    assert P.restrict(CP((2, P.INF)), 5) == CP((2, 3))


def test_distance_examples():
    a = CP((1, 1, 2))
    assert P.distance(a, a) == 0.0
    assert P.distance(CP((1, 1, 1, 1)), CP((2, 1, 1))) == 1.0
    # brute-force definition: [2,2] and [2,1,1] agree on [1],[2],[3] and differ on [4]
    assert P.distance(CP((2, 2)), CP((2, 1, 1))) == pytest.approx(1 / 3)
    assert P.distance_bruteforce(CP((2, 2)), CP((2, 1, 1))) == pytest.approx(1 / 3)


@settings(max_examples=200, deadline=None)
@given(sizes_strategy(max_blocks=7), sizes_strategy(max_blocks=7))
def test_distance_matches_bruteforce(a, b):
    n = min(sum(a), sum(b))
    c, d = P.restrict(CP(tuple(a)), n), P.restrict(CP(tuple(b)), n)
    assert P.distance(c, d) == P.distance_bruteforce(c, d)


def test_apply_merge_examples():
    c = CP((1, 1, 1, 1))
    assert P.apply_merge(c, P.MergeEvent(2, 2)) == CP((1, 2, 1))
    assert P.apply_merge(c, P.MergeEvent(2, boundary=True)) == CP((1, 3))
    with pytest.raises(DomainError):
        P.apply_merge(c, P.MergeEvent(4, 2))
    with pytest.raises(DomainError):
        P.apply_merge(c, P.MergeEvent(3, 3))


def all_events(m):
    for j in range(1, m):
        for k in range(2, m - j + 2):
            yield P.MergeEvent(j, k)
        yield P.MergeEvent(j, boundary=True)


def test_apply_merge_equals_coag_exhaustive():
    for m in range(2, 7):
        for sizes in itertools.product((1, 2, 3), repeat=m):
            c = CP(sizes)
            for e in all_events(m):
                assert P.apply_merge(c, e) == P.coag(c, e.as_partition(m))


@settings(max_examples=300, deadline=None)
@given(sizes_strategy(min_blocks=2, max_blocks=12), st.data())
def test_apply_merge_equals_coag_random(sizes, data):
    c = CP(tuple(sizes))
    m = c.n_blocks
    j = data.draw(st.integers(1, m - 1))
    if data.draw(st.booleans()):
        e = P.MergeEvent(j, boundary=True)
    else:
        e = P.MergeEvent(j, data.draw(st.integers(2, m - j + 1)))
    assert P.apply_merge(c, e) == P.coag(c, e.as_partition(m))


@st.composite
def coag_triples(draw):
    a = CP(tuple(draw(sizes_strategy(max_blocks=10))))
    b_sizes = draw(st.lists(st.integers(1, 4), min_size=1, max_size=10))
    b = CP(tuple(b_sizes))
    if b.ground_size < a.n_blocks:
        b = CP(tuple(b_sizes) + (a.n_blocks - b.ground_size,))
    c = CP(tuple(draw(st.lists(st.integers(1, 4), min_size=1, max_size=10))))
    if c.ground_size < b.n_blocks:
        c = CP(c.sizes + (b.n_blocks - c.ground_size,))
    return a, b, c


@settings(max_examples=300, deadline=None)
@given(coag_triples())
def test_coag_associative(abc):
    a, b, c = abc
    assert P.coag(P.coag(a, b), c) == P.coag(a, P.coag(b, c))


@settings(max_examples=300, deadline=None)
@given(coag_triples(), st.data())
def test_restriction_commutes_with_coag(abc, data):
    c, d, _ = abc
    n = data.draw(st.integers(1, c.ground_size))
    assert P.restrict(P.coag(c, d), n) == P.coag(P.restrict(c, n), d)


@settings(max_examples=300, deadline=None)
@given(sizes_strategy(max_blocks=10), sizes_strategy(max_blocks=10), st.lists(st.integers(1, 4), min_size=1, max_size=10))
def test_coag_lipschitz(a, b, d):
    n = min(sum(a), sum(b))
    A, B = P.restrict(CP(tuple(a)), n), P.restrict(CP(tuple(b)), n)
    D = CP(tuple(d) + (n,))
    assert P.distance(P.coag(A, D), P.coag(B, D)) <= P.distance(A, B)


@settings(max_examples=200, deadline=None)
@given(sizes_strategy(max_blocks=10), st.data())
def test_restriction_consistency(sizes, data):
    c = CP(tuple(sizes))
    k = data.draw(st.integers(1, c.ground_size))
    m = data.draw(st.integers(1, k))
    assert P.restrict(P.restrict(c, k), m) == P.restrict(c, m)


def test_render_parse_round_trip():
    for c in (CP((2, 1, 3)), CP(()), CP((4, P.INF)), P.zero(5)):
        assert P.parse(P.render(c)) == c
    assert P.render(CP((2, 1, P.INF))) == "[2,1,inf]"


def test_invalid_partitions():
    with pytest.raises(DomainError):
        CP((0, 1))
    with pytest.raises(DomainError):
        CP((P.INF, 1))
    with pytest.raises(DomainError):
        P.parse("2,1")


def test_all_partitions_enumeration():
    parts = P.all_partitions(5)
    assert len(parts) == 16 and len(set(parts)) == 16
    assert all(p.ground_size == 5 for p in parts)
