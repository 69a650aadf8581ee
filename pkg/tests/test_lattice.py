import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ramanspin.lattice import (GOLDEN, Lattice, ShiftCollisionError, Site, build_chain, build_square,
                               distance_classes, separation_classes, shift_uniqueness_check)


@pytest.mark.parametrize("N, delta, shifts", [
    (4, 1.0, [0, 1, 2, 3]),
    (1, 5.0, [0]),
    (3, 2.0, [0, 2, 4]),
])
def test_chain_shifts(N, delta, shifts):
    np.testing.assert_allclose(build_chain(N, delta).shifts, shifts)


def test_square_shifts():
    lat = build_square(2, 2, 1.0, q=GOLDEN)
    np.testing.assert_allclose(sorted(lat.shifts), [0, 1, GOLDEN, GOLDEN + 1])
    np.testing.assert_allclose(sorted(build_square(1, 3, 2.0, q=3.7).shifts), [0, 2, 4])


def test_square_4x4_classes():
    lat = build_square(4, 4)
    classes = distance_classes(lat)
    assert sum(len(v) for v in classes.values()) == comb(16, 2) == 120
    assert len(classes) == 9


@pytest.mark.parametrize("ns", range(2, 7))
def test_distance_class_count(ns):
    assert len(distance_classes(build_square(ns, ns))) == (ns * (ns + 1) - 2) // 2


def test_chain_separation_classes():
    c = separation_classes(build_chain(3))
    assert c == {(1,): [(1, 0), (2, 1)], (-1,): [(0, 1), (1, 2)], (2,): [(2, 0)], (-2,): [(0, 2)]}


def test_square_2x2_separations():
    c = separation_classes(build_square(2, 2))
    vecs = set(c)
    assert len(vecs) == 8
    assert all(tuple(-x for x in v) in vecs for v in vecs)


def test_uniqueness():
    assert shift_uniqueness_check(build_chain(8), 0.1).ok
    for ns in range(2, 9):
        assert shift_uniqueness_check(build_square(ns, ns)).ok


def test_rational_q_collides():
    with pytest.raises(ShiftCollisionError):
        build_square(2, 2, q=1.0)
    # assembled by hand, the q = 1 cluster shows which separations coincide
    sites = tuple(Site(2 * y + x, (x, y), float(x + y)) for y in range(2) for x in range(2))
    rep = shift_uniqueness_check(Lattice(2, sites, ((1, 0), (0, 1)), {"unit": 1.0}), 1e-12)
    assert not rep.ok
    assert any({a, b} == {(1, 0), (0, 1)} for a, b, _ in rep.collisions)


def test_invalid():
    with pytest.raises(ValueError):
        build_chain(0)
    with pytest.raises(ValueError):
        build_chain(3, -1.0)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 5), ny=st.integers(1, 5), B2=st.floats(0.1, 10))
def test_json_roundtrip(nx, ny, B2):
    lat = build_square(nx, ny, B2)
    back = Lattice.from_json(lat.to_json())
    assert back == lat
    json.loads(lat.to_json())
