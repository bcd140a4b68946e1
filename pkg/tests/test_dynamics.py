import numpy as np
import pytest

import oracles
from consensus_lab.diagnostics import gamma
from consensus_lab.dynamics import (
    WeightMatrix,
    consensus_projection,
    diameter,
    edge_gap,
    step,
    transition_matrix,
)
from consensus_lab.graph import EdgeConfig


def test_transition_examples():
    assert np.allclose(transition_matrix(EdgeConfig.all_open(2)), [[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(transition_matrix(EdgeConfig.diagonal_only(2)), np.eye(2))
    # agent 1 trusts agent 2 at level 1/3
    r = WeightMatrix.from_edges(2, [(2, 1, 1 / 3), (1, 2, 1.0)])
    P = transition_matrix(EdgeConfig.all_open(2), r)
    assert np.allclose(P[0], [0.75, 0.25], atol=1e-15)
    assert np.allclose(P[1], [0.5, 0.5], atol=1e-15)


def test_step_examples():
    assert np.allclose(step([0.0, 1.0], EdgeConfig.all_open(2)), [0.5, 0.5])
    out = step([0.2, 0.8], EdgeConfig.from_pairs(2, [(1, 2)]))
    assert np.allclose(out, [0.2, 0.5], atol=1e-15)
    X = np.full(4, 0.37)
    for bits in range(0, 1 << 12, 97):
        assert np.array_equal(step(X, EdgeConfig(4, bits)), X)


def test_diameter_projection_gap_examples():
    assert diameter([0, 1]) == 1
    assert diameter([0.3] * 5) == 0
    assert diameter([0.2, 0.5, 0.9]) == pytest.approx(0.7)
    assert np.allclose(consensus_projection([0, 1]), [0.5, 0.5])
    assert np.allclose(consensus_projection([0.1, 0.2, 0.9]), [0.4] * 3)
    assert edge_gap([0, 1], (1, 2)) == 1
    assert edge_gap([0.2, 0.5, 0.9], (2, 2)) == 0
    assert edge_gap([0.2, 0.5, 0.9], (3, 1)) == pytest.approx(-0.7)
    with pytest.raises(ValueError):
        edge_gap([0, 1], (1, 3))


def random_weights(n, rng):
    dense = np.where(rng.random((n, n)) < 0.6, rng.uniform(0.01, 1.0, (n, n)), 0.0)
    np.fill_diagonal(dense, 1.0)
    return WeightMatrix.from_dense(dense)


def test_row_stochastic_and_support():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        n = int(rng.integers(1, 17))
        om = rng.random((n, n)) < rng.random()
        np.fill_diagonal(om, True)
        r = random_weights(n, rng)
        P = transition_matrix(om, r)
        assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)
        rd = r.dense()
        # P[v, u] > 0 only along open channels u -> v with positive weight
        assert not np.any((P > 0) & ~(om.T & (rd.T > 0)))


def test_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        om = rng.random((n, n)) < 0.5
        np.fill_diagonal(om, True)
        r = random_weights(n, rng)
        rmap = {(int(u), int(v)): float(w) for u, v, w in zip(r.src, r.dst, r.w)}
        opened = {(u, v) for u in range(n) for v in range(n) if om[u, v] and u != v}
        P_ref = np.array(oracles.transition(opened, n, rmap))
        assert np.allclose(transition_matrix(om, r), P_ref, atol=1e-14)
        X = rng.random(n)
        assert np.allclose(step(X, om, r), oracles.step(list(X), P_ref.tolist()), atol=1e-14)


def test_range_contraction_and_certificate():
    rng = np.random.default_rng(5)
    for _ in range(3000):
        n = int(rng.integers(2, 7))
        om = rng.random((n, n)) < rng.random()
        np.fill_diagonal(om, True)
        r = random_weights(n, rng)
        X = rng.random(n)
        Y = step(X, om, r)
        assert X.min() <= Y.min() and Y.max() <= X.max()
        assert diameter(Y) <= diameter(X)
        g = gamma(EdgeConfig.from_matrix(om), r).gamma
        assert diameter(Y) <= (1 - g) * diameter(X) + 1e-12
        M = consensus_projection(X)
        assert np.array_equal(step(M, om, r), M)
        assert diameter(X) == pytest.approx(diameter(X - M), abs=1e-15)


def test_weight_matrix_validation():
    with pytest.raises(ValueError):
        WeightMatrix.from_edges(2, [(1, 2, 0.0)])
    with pytest.raises(ValueError):
        WeightMatrix.from_edges(2, [(1, 1, 0.5)])
    with pytest.raises(ValueError):
        WeightMatrix.from_edges(2, [(1, 2, 0.5), (1, 2, 0.4)])
    r = WeightMatrix.from_edges(3, [(3, 1, 0.5), (1, 2, 0.2), (1, 1, 1.0)])
    assert r.support_pairs() == [(1, 2), (3, 1)]
    assert r.dense()[2, 0] == 0.5 and r.dense()[1, 1] == 1.0
