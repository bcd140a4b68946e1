"""Property suites run by ``consensus-lab verify``.

Each check returns a ``Check`` whose margin is the smallest slack observed
(negative means a violation). ``inject`` names one check whose result is
overwritten with a violation of size ``INJECTED_OFFSET``; it is a test hook
for the aggregation and exit-code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    SLACK,
    Check,
    gamma_batch,
    holley_margin,
    pivot_lemma_scan,
    transition_batch,
    verify_ensemble,
    verify_trajectory,
)
from .dynamics import WeightMatrix, diameter
from .engine import RunConfig, run, run_ensemble
from .graph import offdiagonal_pairs
from .noise import ConfidenceFunction, EdgeKernel, enumerate_states, product_masses

INJECTED_OFFSET = 1e-3


@dataclass
class Context:
    n: int
    kernel: ConfidenceFunction
    rng: np.random.Generator
    seed: int


def _status(margin: float, tol: float = SLACK) -> str:
    return "pass" if margin >= -tol else "fail"


def _states_table(n: int, r: WeightMatrix | None = None):
    """All off-diagonal states at n with their gamma values."""
    m = n * (n - 1)
    states = enumerate_states(m)
    om = np.broadcast_to(np.eye(n, dtype=bool), (len(states), n, n)).copy()
    om[:, ~np.eye(n, dtype=bool)] = states
    return states, gamma_batch(transition_batch(om, r))


def _edge_probs(X: np.ndarray, p: ConfidenceFunction) -> np.ndarray:
    pairs = offdiagonal_pairs(len(X))
    return np.atleast_1d(p(np.abs(X[pairs[:, 1]] - X[pairs[:, 0]])))


def all_upsets(m: int) -> np.ndarray:
    """Indicators (over the 2^m states) of every up-set of the Boolean lattice on m bits; small m only."""
    states = enumerate_states(m)
    size = len(states)
    below = (states[:, None, :] <= states[None, :, :]).all(axis=2)  # below[a, b]: a <= b
    out = []
    for mask in range(1 << size):
        ind = np.array([(mask >> i) & 1 for i in range(size)], dtype=bool)
        if not (below[ind] & ~ind[None, :]).any():
            out.append(ind)
    return np.array(out)


def random_upsets(m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Upward closures of random generator sets, as indicators over the 2^m states."""
    states = enumerate_states(m)
    out = np.empty((count, len(states)), dtype=bool)
    for i in range(count):
        k = int(rng.integers(1, 5))
        gens = states[rng.choice(len(states), size=k, replace=False)]
        out[i] = (states[:, None, :] >= gens[None, :, :]).all(axis=2).any(axis=1)
    return out


# ---------------------------------------------------------------- noise suites


def check_normalization(ctx: Context) -> Check:
    n = min(ctx.n, 4)
    worst = 0.0
    for _ in range(20):
        X = ctx.rng.random(n)
        total = product_masses(enumerate_states(n * (n - 1)), _edge_probs(X, ctx.kernel)).sum()
        worst = max(worst, abs(total - 1.0))
    return Check("product_normalization", _status(-worst), -worst, {"n": n})


def check_monotone(ctx: Context) -> Check:
    x = np.linspace(0.0, 1.0, 1001)
    y = ctx.kernel(x)
    inc = float(np.max(np.diff(y)))
    at0 = abs(float(ctx.kernel(0.0)) - 1.0)
    margin = -max(inc, at0, 0.0)
    return Check("confidence_monotone", _status(margin), margin, {"grid": 1001})


def check_holley_pointwise(ctx: Context) -> Check:
    n = min(max(ctx.n, 2), 8)
    worst = np.inf
    for _ in range(10_000):
        X = ctx.rng.random(int(ctx.rng.integers(2, n + 1)))
        worst = min(worst, holley_margin(X, ctx.kernel))
    return Check("holley_pointwise", _status(worst), float(worst), {"draws": 10_000, "max_n": n})


def _domination_margin(ctx: Context, n: int, upsets: np.ndarray, draws: int) -> float:
    states = enumerate_states(n * (n - 1))
    worst = np.inf
    for _ in range(draws):
        X = ctx.rng.random(n)
        mu_x = product_masses(states, _edge_probs(X, ctx.kernel))
        q = float(ctx.kernel(diameter(X)))
        mu_w = product_masses(states, np.full(states.shape[1], q))
        diff = upsets.astype(float) @ (mu_x - mu_w)
        worst = min(worst, float(diff.min()))
    return worst


def check_domination(ctx: Context) -> Check:
    m2 = _domination_margin(ctx, 2, all_upsets(2), 100)
    m3 = _domination_margin(ctx, 3, random_upsets(6, 100, ctx.rng), 100)
    margin = min(m2, m3)
    return Check("stochastic_domination", _status(margin), margin, {"n2_upsets": 6, "n3_upsets": 100})


def check_time_domination(ctx: Context) -> Check:
    n = min(max(ctx.n, 2), 8)
    # non-uniform positive weights avoid one-step consensus, so W moves for many steps
    cfg = RunConfig(
        n,
        ctx.kernel,
        X0={"kind": "uniform"},
        weights={"kind": "random_sparse", "density": 1.0, "low": 0.05},
        seed=ctx.seed,
        omega0="sample",
        max_steps=50,
        fixed_horizon=True,
    )
    W = run(cfg).W
    states = enumerate_states(6)
    ups = random_upsets(6, 100, ctx.rng).astype(float)
    worst = np.inf
    for t in range(len(W) - 1):
        hi = product_masses(states, np.full(6, float(ctx.kernel(W[t + 1]))))
        lo = product_masses(states, np.full(6, float(ctx.kernel(W[t]))))
        worst = min(worst, float((ups @ (hi - lo)).min()))
    if not np.isfinite(worst):
        worst = 0.0
    return Check("time_domination", _status(worst), worst, {"steps": len(W) - 1})


# ---------------------------------------------------------------- diagnostics suites


def check_gamma_range(ctx: Context) -> Check:
    n = max(ctx.n, 2)
    om = ctx.rng.random((2000, n, n)) < 0.5
    om[:, np.arange(n), np.arange(n)] = True
    r = WeightMatrix.from_dense(np.where(np.eye(n, dtype=bool), 1.0, ctx.rng.uniform(0.05, 1.0, (n, n))))
    g = gamma_batch(transition_batch(om, r))
    full = gamma_batch(transition_batch(np.ones((1, n, n), dtype=bool)))[0]
    margin = min(float(g.min()), float(1.0 - g.max()), -abs(full - 1.0))
    return Check("gamma_range", _status(margin), margin, {"n": n, "gamma_all_open": float(full)})


def check_pivot_scans(ctx: Context) -> list[Check]:
    out_cin, out_fwd = [], []
    converse = {}
    for n in sorted({2, 3, min(max(ctx.n, 2), 4)}):
        for label, r in (("uniform", None), ("random", _random_positive(n, ctx.rng))):
            scan = pivot_lemma_scan(n, r)
            out_cin.append(len(scan.cin_mismatches))
            out_fwd.append(len(scan.forward_violations))
            converse[f"n{n}_{label}"] = len(scan.discrepancies)
    cin = Check(
        "common_in_neighbor",
        "fail" if sum(out_cin) else "pass",
        -float(sum(out_cin)),
        {"mismatches": sum(out_cin)},
    )
    fwd = Check(
        "pivot_forward",
        "fail" if sum(out_fwd) else "pass",
        -float(sum(out_fwd)),
        {"violations": sum(out_fwd), "converse_discrepancies": converse},
    )
    return [cin, fwd]


def _random_positive(n: int, rng: np.random.Generator) -> WeightMatrix:
    return WeightMatrix.from_dense(np.where(np.eye(n, dtype=bool), 1.0, rng.uniform(0.05, 1.0, (n, n))))


def check_Gamma_domination(ctx: Context) -> Check:
    states, g = _states_table(3)
    worst = np.inf
    for _ in range(1000):
        X = ctx.rng.random(3)
        G_x = product_masses(states, _edge_probs(X, ctx.kernel)) @ g
        q = float(ctx.kernel(diameter(X)))
        G_w = product_masses(states, np.full(6, q)) @ g
        worst = min(worst, float(G_x - G_w))
    return Check("Gamma_domination", _status(worst), worst, {"draws": 1000, "n": 3})


def check_Gamma_mc(ctx: Context) -> Check:
    states, g = _states_table(3)
    weights = 1 << np.arange(6)
    X = ctx.rng.random(3)
    probs = _edge_probs(X, ctx.kernel)
    exact = float(product_masses(states, probs) @ g)
    inside = 0
    for _ in range(100):
        u = ctx.rng.random((10_000, 6)) < probs
        vals = g[u.astype(np.int64) @ weights]
        est = vals.mean()
        se = vals.std(ddof=1) / 100.0
        inside += abs(est - exact) <= 4 * se + SLACK
    margin = (inside - 99) / 100.0
    return Check("Gamma_mc_consistency", "pass" if inside >= 99 else "fail", margin, {"within_4se": int(inside)})


def check_contraction(ctx: Context) -> Check:
    n = max(ctx.n, 2)
    cfg = RunConfig(
        n,
        ctx.kernel,
        X0={"kind": "uniform"},
        weights={"kind": "random_sparse", "density": 0.6, "low": 0.05},
        seed=ctx.seed,
        omega0="sample",
        max_steps=300,
        record={"omegas": True},
    )
    ens = run_ensemble(cfg, 50, keep_records=True)
    bad = 0
    for rec in ens.records:
        bad += len(verify_trajectory(rec, cfg.weight_matrix()))
    return Check("contraction", "pass" if bad == 0 else "fail", -float(bad), {"trajectories": 50})


def check_bound_ensemble(ctx: Context) -> list[Check]:
    n = max(ctx.n, 2)
    cfg = RunConfig(n, ctx.kernel, seed=ctx.seed, omega0="sample", max_steps=20, fixed_horizon=True)
    ens = run_ensemble(cfg, 2000)
    rep = verify_ensemble(ens, cfg.initial_beliefs(), None, EdgeKernel(ctx.kernel))
    for c in rep.checks:
        c.details["Gamma_X0"] = rep.Gamma_X0
        if not rep.hypotheses_met:
            c.details["flag"] = rep.flags()[0]
    return rep.checks


SUITES = {
    "noise": [check_normalization, check_monotone, check_holley_pointwise, check_domination, check_time_domination],
    "diagnostics": [
        check_gamma_range,
        check_pivot_scans,
        check_Gamma_domination,
        check_Gamma_mc,
        check_contraction,
        check_bound_ensemble,
    ],
}

CHECK_NAMES = (
    "product_normalization",
    "confidence_monotone",
    "holley_pointwise",
    "stochastic_domination",
    "time_domination",
    "gamma_range",
    "common_in_neighbor",
    "pivot_forward",
    "Gamma_domination",
    "Gamma_mc_consistency",
    "contraction",
    "geometric_bound",
    "supermartingale",
    "edge_distance",
)


def run_suites(n: int, kernel: ConfidenceFunction, seed: int = 0, inject: str | None = None) -> list[Check]:
    """Run every noise and diagnostics property check; ``inject="random"`` picks a check from the seed."""
    if inject == "random":
        inject = CHECK_NAMES[int(np.random.default_rng(seed).integers(len(CHECK_NAMES)))]
    if inject is not None and inject not in CHECK_NAMES:
        raise ValueError(f"unknown check {inject!r}; choose from {CHECK_NAMES}")
    ctx = Context(n, kernel, np.random.default_rng(seed), seed)
    out: list[Check] = []
    for suite in SUITES.values():
        for fn in suite:
            res = fn(ctx)
            out.extend(res if isinstance(res, list) else [res])
    for c in out:
        if c.name == inject:
            c.margin = min(c.margin, 0.0) - INJECTED_OFFSET
            c.status = "fail"
            c.details["injected"] = True
    return out
