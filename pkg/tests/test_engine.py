import numpy as np
import pytest

from consensus_lab.dynamics import WeightMatrix
from consensus_lab.engine import (
    RunConfig,
    initial_diameter,
    pair_gamma0,
    run,
    run_ensemble,
    run_pair_chain,
    run_sparse,
)
from consensus_lab.noise import ConfidenceFunction, component_seed

CONST = ConfidenceFunction.constant()
LIN = ConfidenceFunction.linear


def test_constant_one_reaches_consensus_in_one_step():
    rec = run(RunConfig(n=4, kernel=CONST, X0=[0.0, 0.2, 0.7, 1.0], record={"beliefs": True}))
    assert rec.steps == 1
    assert rec.stop_reason == "all_probs_one"
    assert rec.W[1] < 1e-12
    assert np.allclose(rec.final_X, 0.475)


def test_consensus_start_stops_at_zero():
    rec = run(RunConfig(n=3, kernel=LIN(0.5), X0=[0.4, 0.4, 0.4]))
    assert rec.steps == 0
    assert rec.stop_reason == "all_probs_one"
    assert rec.W.tolist() == [0.0]


def test_threshold_split_never_moves():
    cfg = RunConfig(
        n=2, kernel=ConfidenceFunction.threshold(0.5, 0.0), X0=[0.0, 1.0], omega0="sample", max_steps=100
    )
    rec = run(cfg)
    assert rec.stop_reason == "max_steps"
    assert rec.steps == 100
    assert np.all(rec.W == 1.0)
    assert rec.final_X.tolist() == [0.0, 1.0]


def test_small_tolerance_reason():
    rec = run(RunConfig(n=3, kernel=LIN(0.5), X0=[0.0, 0.5, 1.0], consensus_tol=1e-6))
    assert rec.stop_reason in ("consensus_tol", "all_probs_one")
    assert rec.W[-1] < 1e-6
    assert np.all(rec.W[:-1] >= 1e-6)


def test_determinism():
    cfg = dict(n=5, kernel=LIN(0.8), X0={"kind": "uniform"}, seed=11, record={"beliefs": True, "omegas": True})
    a = run(RunConfig(**cfg))
    b = run(RunConfig(**cfg))
    assert a == b
    c = run(RunConfig(**{**cfg, "seed": 12}))
    assert not a == c


def test_ensemble_trajectory_zero_matches_run():
    cfg = RunConfig(n=4, kernel=LIN(0.7), omega0="sample", seed=3, record={"omegas": True})
    ens = run_ensemble(cfg, 5, keep_records=True)
    assert ens.records[0] == run(cfg)
    # trajectories do not depend on how many are run together
    assert run_ensemble(cfg, 2, keep_records=True).records[1] == ens.records[1]


def test_range_preserved_and_W_nonincreasing():
    rng = np.random.default_rng(0)
    for seed in range(30):
        n = int(rng.integers(2, 7))
        p = [LIN(1.0), ConfidenceFunction.exponential(3.0), ConfidenceFunction.threshold(0.3, 0.1)][seed % 3]
        rec = run(RunConfig(n=n, kernel=p, X0={"kind": "uniform"}, seed=seed, omega0="sample", max_steps=200, record={"beliefs": True}))
        X0 = rec.X[0]
        assert np.all(rec.X >= X0.min()) and np.all(rec.X <= X0.max())
        assert np.all(np.diff(rec.W) <= 1e-15)


def test_gamma_per_step_record():
    rec = run(RunConfig(n=3, kernel=LIN(0.5), omega0="sample", max_steps=4, fixed_horizon=True, record={"gamma_per_step": True}))
    assert len(rec.gamma) == 5
    assert np.isnan(rec.gamma[-1])
    assert np.all((rec.gamma[:-1] >= 0) & (rec.gamma[:-1] <= 1))


def test_symmetric_ensemble_final_mean():
    cfg = RunConfig(n=2, kernel=LIN(0.5), X0=[0.0, 1.0], omega0="sample", consensus_tol=1e-8, seed=5)
    ens = run_ensemble(cfg, 10_000)
    finals = ens.final_X.mean(axis=1)
    se = finals.std(ddof=1) / np.sqrt(len(finals))
    assert abs(finals.mean() - 0.5) <= 4 * se
    assert "max_steps" not in ens.stop_reasons


def test_ensemble_summaries():
    ens = run_ensemble(RunConfig(n=3, kernel=LIN(0.5), omega0="sample", consensus_tol=1e-6), 200)
    assert ens.mean_W.shape == ens.var_W.shape == (ens.W.shape[1],)
    hist = ens.consensus_time_histogram()
    assert sum(hist.values()) == 200
    counts, edges = ens.final_value_histogram()
    assert counts.sum() == 200 and edges[0] == 0.0 and edges[-1] == 1.0


def test_pair_chain():
    cfg = RunConfig(n=2, kernel=LIN(0.5), X0=[0.0, 1.0], omega0="sample", max_steps=10, fixed_horizon=True, record={"beliefs": True})
    pc = run_pair_chain(cfg)
    assert pc.Gammabar0 == pytest.approx(pair_gamma0(cfg)) == pytest.approx(0.5)
    assert np.array_equal(pc.Wbar, pc.record.W[::2])
    assert pc.bound.base == pytest.approx(0.25)
    assert len(pc.pairs) == 5
    assert initial_diameter(cfg) == 1.0


def test_sparse_million_agents_matches_dense_pair():
    n = 1_000_000
    r = WeightMatrix.from_edges(n, [(1, 2, 1.0), (2, 1, 1.0)])
    X0 = np.full(n, 0.5)
    X0[:2] = [0.0, 1.0]
    sparse = RunConfig(n=n, kernel=LIN(0.5), X0=X0, weights=r, omega0="sample", seed=9, max_steps=50, fixed_horizon=True)
    assert sparse.resolved_mode() == "sparse"
    a = run_sparse(sparse)
    b = run(RunConfig(n=2, kernel=LIN(0.5), X0=[0.0, 1.0], omega0="sample", seed=9, max_steps=50, fixed_horizon=True))
    assert np.array_equal(a.W, b.W)
    assert np.array_equal(a.final_X, b.final_X)


def test_sparse_outside_agents_stay_fixed():
    n = 10_000
    r = WeightMatrix.from_edges(n, [(1, 2, 1.0), (2, 1, 0.5), (5, 6, 1.0)])
    X0 = np.linspace(0, 1, n)
    cfg = RunConfig(
        n=n, kernel=CONST, X0=X0, weights=r, seed=1, max_steps=5, fixed_horizon=True,
        truncation_window=8, n_observed=7, record={"beliefs": True},
    )
    rec = run_sparse(cfg)
    assert rec.X.shape == (6, 7)
    for a in (2, 3, 6):  # 0-based agents 3, 4, 7 touch no support edge
        assert np.all(rec.X[:, a] == X0[a])
    # each step shrinks the pair gap by 1 - 1/2 - 1/3
    gap = lambda t: abs(rec.X[t, 0] - rec.X[t, 1])
    assert gap(5) == pytest.approx(gap(0) / 6**5, rel=1e-9)


def test_sparse_components_use_split_seeds():
    r = WeightMatrix.from_edges(4, [(1, 2, 1.0), (2, 1, 1.0), (3, 4, 1.0), (4, 3, 1.0)])
    X0 = [0.0, 0.4, 0.6, 1.0]
    kw = dict(kernel=LIN(0.9), omega0="sample", max_steps=30, fixed_horizon=True, record={"beliefs": True})
    joint = run(RunConfig(n=4, X0=X0, weights=r, mode="sparse", seed=21, **kw))
    left = run(RunConfig(n=2, X0=X0[:2], seed=component_seed(21, 0), **kw))
    right = run(RunConfig(n=2, X0=X0[2:], seed=component_seed(21, 1), **kw))
    assert np.array_equal(joint.X[:, :2], left.X)
    assert np.array_equal(joint.X[:, 2:], right.X)
    assert np.array_equal(joint.W, np.maximum(left.W, right.W))


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_sparse_and_dense_agree_on_connected_support(n):
    kw = dict(n=n, kernel=LIN(0.6), X0={"kind": "uniform"}, omega0="sample", seed=n, max_steps=40, fixed_horizon=True, record={"beliefs": True, "omegas": True})
    r = WeightMatrix.uniform(n)
    assert run(RunConfig(weights=r, mode="dense", **kw)) == run(RunConfig(weights=r, mode="sparse", **kw))


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(n=0, kernel=CONST)
    with pytest.raises(ValueError):
        RunConfig(n=2, kernel=CONST, consensus_tol=0.0)
    with pytest.raises(ValueError):
        RunConfig(n=2, kernel=CONST, omega0="sometimes")
    with pytest.raises(ValueError):
        RunConfig(n=2, kernel=CONST, mode="fast")
    with pytest.raises(ValueError):
        RunConfig(n=4, kernel=CONST, truncation_window=2, n_observed=3)
    with pytest.raises(ValueError):
        run(RunConfig(n=2, kernel=CONST, X0=[0.0, 1.5]))
    with pytest.raises(ValueError):
        run(RunConfig(n=3, kernel=CONST, X0=[0.0, 1.0]))
    with pytest.raises(ValueError):
        run_sparse(RunConfig(n=3, kernel=CONST))
    with pytest.raises(ValueError):
        run_ensemble(RunConfig(n=3, kernel=CONST), 0)


def test_belief_generators_are_seeded():
    a = RunConfig(n=6, kernel=CONST, X0={"kind": "two_cluster", "spread": 0.05}, seed=4).initial_beliefs()
    b = RunConfig(n=6, kernel=CONST, X0={"kind": "two_cluster", "spread": 0.05}, seed=4).initial_beliefs()
    assert np.array_equal(a, b)
    assert np.all(np.abs(a[:3] - 0.2) <= 0.05) and np.all(np.abs(a[3:] - 0.8) <= 0.05)
    assert np.allclose(RunConfig(n=5, kernel=CONST).initial_beliefs(), [0, 0.25, 0.5, 0.75, 1])
