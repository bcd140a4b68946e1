import itertools

import numpy as np
import pytest

from consensus_lab.graph import (
    EdgeConfig,
    in_neighborhood,
    iterated_out_neighborhood,
    open_edges,
    out_neighborhood,
    pivots,
    support_components,
)

CYCLE = [(1, 2), (2, 3), (3, 1)]


def all_configs(n):
    return [EdgeConfig(n, b) for b in range(1 << (n * (n - 1)))]


def test_open_edges_examples():
    assert open_edges(EdgeConfig.diagonal_only(2)) == {(1, 1), (2, 2)}
    assert open_edges(EdgeConfig.all_open(2)) == {(1, 1), (1, 2), (2, 1), (2, 2)}
    cyc = EdgeConfig.from_pairs(3, CYCLE)
    assert open_edges(cyc) == set(CYCLE) | {(1, 1), (2, 2), (3, 3)}


def test_neighborhood_examples():
    cyc = EdgeConfig.from_pairs(3, CYCLE)
    assert in_neighborhood(EdgeConfig.diagonal_only(2), 1) == {1}
    assert in_neighborhood(EdgeConfig.all_open(2), 2) == {1, 2}
    assert in_neighborhood(cyc, 1) == {1, 3}
    assert out_neighborhood(cyc, 1) == {1, 2}
    assert out_neighborhood(EdgeConfig.all_open(2), 1) == {1, 2}


def test_neighborhood_out_of_range():
    with pytest.raises(ValueError):
        in_neighborhood(EdgeConfig.all_open(2), 3)
    with pytest.raises(ValueError):
        out_neighborhood(EdgeConfig.all_open(2), 0)


def test_iterated_neighborhood():
    cyc = EdgeConfig.from_pairs(3, CYCLE)
    assert iterated_out_neighborhood(cyc, 1, 1) == out_neighborhood(cyc, 1)
    assert iterated_out_neighborhood(cyc, 1, 2) == {1, 2, 3}
    assert iterated_out_neighborhood(EdgeConfig.all_open(4), 2, 3) == {1, 2, 3, 4}
    with pytest.raises(ValueError):
        iterated_out_neighborhood(cyc, 1, 0)


def test_pivots_examples():
    assert pivots(EdgeConfig.all_open(3)) == {1, 2, 3}
    assert pivots(EdgeConfig.diagonal_only(2)) == set()
    assert pivots(EdgeConfig.from_pairs(3, CYCLE)) == set()


def test_support_components_examples():
    full = [(u, v) for u in range(1, 5) for v in range(1, 5)]
    assert support_components(full, 4) == [{1, 2, 3, 4}]
    assert support_components([(1, 1), (2, 2), (3, 3)], 3) == [{1}, {2}, {3}]
    assert support_components([(1, 1), (2, 2), (3, 3), (1, 2), (2, 1)], 3) == [{1, 2}, {3}]


def test_strong_and_weak_components_differ_on_one_way_edge():
    assert support_components([(1, 2)], 2, connection="strong") == [{1}, {2}]
    assert support_components([(1, 2)], 2, connection="weak") == [{1, 2}]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_neighborhood_invariants_exhaustive(n):
    for om in all_configs(n):
        for v in range(1, n + 1):
            assert v in in_neighborhood(om, v)
            assert v in out_neighborhood(om, v)
        for u, v in itertools.product(range(1, n + 1), repeat=2):
            assert (u in out_neighborhood(om, v)) == (v in in_neighborhood(om, u))
        for w in pivots(om):
            assert len(out_neighborhood(om, w)) == n


@pytest.mark.parametrize("n", [2, 3])
def test_iterated_neighborhood_monotone_and_stable(n):
    for om in all_configs(n):
        for v in range(1, n + 1):
            prev = set()
            for k in range(1, n + 3):
                cur = iterated_out_neighborhood(om, v, k)
                assert prev <= cur
                if k >= n:
                    assert cur == iterated_out_neighborhood(om, v, k + 1)
                prev = cur


def test_edge_config_bits_roundtrip():
    m = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=bool)
    om = EdgeConfig.from_matrix(m)
    assert np.array_equal(om.matrix, m)
    assert EdgeConfig.parse("110/011/101") == om
    assert om.format() == "110/011/101"
    assert om.n_closed() == 3


def test_edge_config_rejects_closed_diagonal():
    with pytest.raises(ValueError):
        EdgeConfig.from_matrix(np.zeros((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        EdgeConfig.parse("0110")
    with pytest.raises(ValueError):
        EdgeConfig.parse("11x1")
