"""Trajectory simulation: single runs, ensembles, the pair chain and sparse large systems.

Every run goes through one batched kernel that advances K trajectories in
lockstep over an edge list. Dense mode treats all agents as one group;
sparse mode splits the active agents into the weakly connected components
of the support, each with its own edge stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .diagnostics import (
    BoundCurve,
    EnumerationBudgetError,
    Gamma_exact,
    Gamma_mc,
    gamma_batch,
    pair_bound_curve,
    transition_batch,
)
from .dynamics import WeightMatrix, diameter
from .graph import EdgeConfig, SparseEdgeConfig, support_components
from .noise import (
    WEIGHTS_STREAM,
    X0_STREAM,
    ConfidenceFunction,
    EdgeKernel,
    RngStream,
    aux_generator,
    block_counters,
    component_seed,
)

STOP_REASONS = ("consensus_tol", "all_probs_one", "max_steps")
ALL_ONE_TOL = 1e-12
DENSE_EDGE_LIMIT = 50_000_000
SPARSE_AUTO_N = 4096
OMEGA0_KINDS = ("all_open", "diagonal", "sample")


@dataclass(frozen=True)
class RecordFlags:
    beliefs: bool = False
    omegas: bool = False
    gamma_per_step: bool = False


@dataclass
class RunConfig:
    """Everything needed to reproduce a trajectory.

    ``X0`` is a list of beliefs or a generator spec ``{"kind": "uniform" |
    "equispaced" | "two_cluster", ...}``; ``weights`` is a WeightMatrix or a
    spec ``{"kind": "uniform" | "sparse" | "random_sparse", ...}``. ``omega0``
    is "all_open", "diagonal", "sample" (drawn from the kernel at X0), an
    EdgeConfig, or a list of 1-based open pairs.
    """

    n: int
    kernel: ConfidenceFunction
    X0: Any = None
    weights: Any = None
    omega0: Any = "all_open"
    seed: int = 0
    max_steps: int = 10_000
    consensus_tol: float = 1e-10
    record: RecordFlags = field(default_factory=RecordFlags)
    mode: str = "auto"
    truncation_window: int | None = None
    n_observed: int | None = None
    fixed_horizon: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.consensus_tol > 0:
            raise ValueError("consensus_tol must be > 0")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.mode not in ("auto", "dense", "sparse"):
            raise ValueError(f"mode must be auto, dense or sparse, got {self.mode!r}")
        if isinstance(self.omega0, str) and self.omega0 not in OMEGA0_KINDS:
            raise ValueError(f"omega0 must be one of {OMEGA0_KINDS}, an edge configuration or a pair list")
        if self.n_observed is not None and not 1 <= self.n_observed <= self.n:
            raise ValueError("n_observed must lie in 1..n")
        if self.truncation_window is not None:
            if not 1 <= self.truncation_window <= self.n:
                raise ValueError("truncation_window must lie in 1..n")
            if self.n_observed is not None and self.truncation_window <= self.n_observed:
                raise ValueError("truncation_window must exceed n_observed")
        if isinstance(self.record, dict):
            self.record = RecordFlags(**self.record)
        self._cache: dict = {}

    # resolved inputs are cached; the config itself stays declarative
    def initial_beliefs(self) -> np.ndarray:
        if "X0" not in self._cache:
            self._cache["X0"] = resolve_beliefs(self.X0, self.n, self.seed)
        return self._cache["X0"]

    def weight_matrix(self) -> WeightMatrix:
        if "r" not in self._cache:
            self._cache["r"] = resolve_weights(self.weights, self.n, self.seed)
        return self._cache["r"]

    def resolved_mode(self) -> str:
        if self.mode != "auto":
            return self.mode
        explicit = isinstance(self.weights, WeightMatrix) or (
            isinstance(self.weights, dict) and self.weights.get("kind", "uniform") != "uniform"
        )
        return "sparse" if explicit and self.n > SPARSE_AUTO_N else "dense"

    def edge_kernel(self) -> EdgeKernel:
        return EdgeKernel(self.kernel, self.weight_matrix())


def resolve_beliefs(spec, n: int, seed: int) -> np.ndarray:
    if spec is None:
        spec = {"kind": "equispaced"}
    if isinstance(spec, dict):
        kind = spec.get("kind", "equispaced")
        rng = aux_generator(seed, X0_STREAM)
        if kind == "equispaced":
            X = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
        elif kind == "uniform":
            X = rng.random(n)
        elif kind == "two_cluster":
            spread = float(spec.get("spread", 0.05))
            centers = np.where(np.arange(n) < (n + 1) // 2, 0.2, 0.8)
            X = np.clip(centers + spread * (2 * rng.random(n) - 1), 0.0, 1.0)
        else:
            raise ValueError(f"unknown X0 kind {kind!r}")
    else:
        X = np.asarray(spec, dtype=float)
        if X.shape != (n,):
            raise ValueError(f"X0 has {X.size} entries, expected {n}")
    if not np.isfinite(X).all() or X.min() < 0 or X.max() > 1:
        raise ValueError("X0 entries must lie in [0, 1]")
    return X


def resolve_weights(spec, n: int, seed: int) -> WeightMatrix:
    if isinstance(spec, WeightMatrix):
        if spec.n != n:
            raise ValueError(f"weights are for {spec.n} agents, config has {n}")
        return spec
    spec = spec or {"kind": "uniform"}
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        if n * (n - 1) > DENSE_EDGE_LIMIT:
            raise ValueError(f"uniform weights on n={n} agents need n(n-1) edges; give a sparse support")
        return WeightMatrix.uniform(n)
    if kind == "sparse":
        return WeightMatrix.from_edges(n, [tuple(e) for e in spec["edges"]])
    if kind == "random_sparse":
        rng = aux_generator(seed, WEIGHTS_STREAM)
        return WeightMatrix.random_sparse(
            n, float(spec["density"]), rng, float(spec.get("low", 0.0)), float(spec.get("high", 1.0))
        )
    raise ValueError(f"unknown weights kind {kind!r}")


# ---------------------------------------------------------------- records


@dataclass(eq=False)
class TrajectoryRecord:
    """Per-step log of one trajectory, t = 0..steps.

    ``omegas`` holds the support-edge states (row-major support order);
    ``gamma[t]`` is gamma(omega(t)) and is NaN on the final row, where the
    configuration never acts.
    """

    n: int
    W: np.ndarray
    mean_X: np.ndarray
    edge_distance: np.ndarray
    stop_reason: str
    final_X: np.ndarray
    X: np.ndarray | None = None
    omegas: np.ndarray | None = None
    gamma: np.ndarray | None = None
    src: np.ndarray | None = None
    dst: np.ndarray | None = None
    run_id: int = 0

    @property
    def steps(self) -> int:
        return len(self.W) - 1

    def __eq__(self, other):
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        if (self.n, self.stop_reason, self.run_id) != (other.n, other.stop_reason, other.run_id):
            return False
        for name in ("W", "mean_X", "edge_distance", "final_X", "X", "omegas", "gamma", "src", "dst"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(np.asarray(a), np.asarray(b), equal_nan=a.dtype.kind == "f"):
                return False
        return True

    def omega_matrices(self) -> np.ndarray | None:
        if self.omegas is None:
            return None
        om = np.broadcast_to(np.eye(self.n, dtype=bool), (len(self.omegas), self.n, self.n)).copy()
        om[:, self.src, self.dst] = self.omegas
        return om

    def omega(self, t: int) -> EdgeConfig | SparseEdgeConfig:
        if self.omegas is None:
            raise ValueError("omegas were not recorded")
        if self.n * (self.n - 1) <= DENSE_EDGE_LIMIT and self.n <= 4096:
            return EdgeConfig.from_matrix(self.omega_matrices()[t])
        support = tuple((int(u) + 1, int(v) + 1) for u, v in zip(self.src, self.dst))
        return SparseEdgeConfig(support, tuple(bool(b) for b in self.omegas[t]))


@dataclass
class EnsembleResult:
    """Per-trajectory arrays of shape (K, T + 1); stopped trajectories are held at their final state."""

    W: np.ndarray
    mean_X: np.ndarray
    edge_distance: np.ndarray
    stop_t: np.ndarray
    stop_reasons: list
    final_X: np.ndarray
    omega0_sampled: bool
    gamma: np.ndarray | None = None
    X: np.ndarray | None = None
    omegas: np.ndarray | None = None
    records: list | None = None

    @property
    def trajectories(self) -> int:
        return self.W.shape[0]

    @property
    def mean_W(self) -> np.ndarray:
        return self.W.mean(axis=0)

    @property
    def var_W(self) -> np.ndarray:
        return self.W.var(axis=0, ddof=1) if self.trajectories > 1 else np.zeros(self.W.shape[1])

    def consensus_time_histogram(self) -> dict[int, int]:
        """Counts of stopping times over trajectories that stopped before max_steps."""
        hit = [int(t) for t, r in zip(self.stop_t, self.stop_reasons) if r != "max_steps"]
        values, counts = np.unique(np.array(hit, dtype=int), return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def final_value_histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        return np.histogram(self.final_X.mean(axis=1), bins=bins, range=(0.0, 1.0))


# ---------------------------------------------------------------- kernel


class _Group:
    """Agents advanced together over one edge list, for K trajectories."""

    def __init__(self, agents, src, dst, w, seed: int, trajectories: np.ndarray, chunk_hint: int):
        self.agents = agents
        self.src, self.dst, self.w = src, dst, w
        self.m = len(src)
        n_c = len(agents)
        # in-edge slots per agent, padded with index m (a zero column appended at use)
        order = np.argsort(dst, kind="stable")
        counts = np.bincount(dst, minlength=n_c)
        d = int(counts.max()) if self.m else 0
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slots = np.full((n_c, d), self.m, dtype=np.int64)
        pos = np.arange(self.m) - starts[dst[order]]
        slots[dst[order], pos] = order
        self.slots = slots
        self.q = block_counters(self.m)
        self.K = len(trajectories)
        self.chunk = max(1, min(chunk_hint, 4_000_000 // max(1, self.K * 4 * self.q)))
        self.gens = [RngStream(seed, int(k)).generator(self.m) for k in trajectories]
        self.buf = np.empty((self.K, 0, self.m))
        self.buf_start = 0

    def uniforms(self, t: int) -> np.ndarray:
        """Stream block t for every trajectory, shape (K, m); blocks are consumed in order."""
        if t < self.buf_start:
            raise RuntimeError("edge stream blocks must be consumed in order")
        size = self.chunk * 4 * self.q
        while t >= self.buf_start + self.buf.shape[1]:
            self.buf_start += self.buf.shape[1]
            self.buf = np.stack([g.random(size).reshape(self.chunk, 4 * self.q)[:, : self.m] for g in self.gens])
        return self.buf[:, t - self.buf_start]

    def probabilities(self, X, p: ConfidenceFunction) -> np.ndarray:
        return np.asarray(p(np.abs(X[:, self.dst] - X[:, self.src])), dtype=float).reshape(self.K, self.m)

    def advance(self, X, omega) -> np.ndarray:
        wo = self.w * omega
        diff = wo * (X[:, self.src] - X[:, self.dst])
        pad = np.zeros((self.K, 1))
        num = np.concatenate([diff, pad], axis=1)[:, self.slots].sum(axis=-1)
        den = 1.0 + np.concatenate([wo, pad], axis=1)[:, self.slots].sum(axis=-1)
        out = X + num / den
        return np.clip(out, X.min(axis=1, keepdims=True), X.max(axis=1, keepdims=True))


def _initial_omega(config: RunConfig, r: WeightMatrix) -> np.ndarray | None:
    """Support flags of a user-given omega0, or None for the kinds handled per group."""
    om = config.omega0
    if isinstance(om, str):
        return None
    if isinstance(om, EdgeConfig):
        if om.n != config.n:
            raise ValueError("omega0 size differs from n")
        return om.matrix[r.src, r.dst]
    pairs = {(int(u), int(v)) for u, v in om}
    for u, v in pairs:
        if not (1 <= u <= config.n and 1 <= v <= config.n):
            raise ValueError(f"omega0 pair {(u, v)} out of range")
    return np.array([(int(u) + 1, int(v) + 1) in pairs for u, v in zip(r.src, r.dst)], dtype=bool)


def _build_groups(config: RunConfig, r: WeightMatrix, mode: str, trajectories: np.ndarray, chunk: int):
    n = config.n
    if mode == "dense":
        if n * (n - 1) > DENSE_EDGE_LIMIT:
            raise ValueError("dense mode is limited to small systems; use mode 'sparse'")
        return [(_Group(np.arange(n), r.src, r.dst, r.w, config.seed, trajectories, chunk), np.arange(r.m))]
    if r.m == 0:
        raise ValueError("sparse mode needs a nonempty support")
    M = config.truncation_window or int(max(r.src.max(), r.dst.max())) + 1
    if max(r.src.max(), r.dst.max()) >= M:
        raise ValueError("truncation window must contain every support edge")
    active = np.unique(np.concatenate([r.src, r.dst]))
    local = np.full(M, -1, dtype=np.int64)
    local[active] = np.arange(len(active))
    pairs = [(int(local[u]) + 1, int(local[v]) + 1) for u, v in zip(r.src, r.dst)]
    comps = support_components(pairs, len(active), connection="weak")
    label = np.empty(len(active), dtype=np.int64)
    for c, comp in enumerate(comps):
        label[np.array(sorted(comp)) - 1] = c
    edge_label = label[local[r.src]]
    groups = []
    for c, comp in enumerate(comps):
        agents = active[np.array(sorted(comp)) - 1]
        idx = np.flatnonzero(edge_label == c)  # stays row-major
        pos = np.full(M, -1, dtype=np.int64)
        pos[agents] = np.arange(len(agents))
        g = _Group(
            agents, pos[r.src[idx]], pos[r.dst[idx]], r.w[idx], component_seed(config.seed, c), trajectories, chunk
        )
        groups.append((g, idx))
    return groups


def _simulate(config: RunConfig, trajectories: Sequence[int], keep_records: bool = False):
    X0 = config.initial_beliefs()
    r = config.weight_matrix()
    mode = config.resolved_mode()
    n = config.n
    K = len(trajectories)
    traj = np.asarray(trajectories, dtype=np.int64)
    chunk = config.max_steps + 1 if config.fixed_horizon else 64
    chunk = min(chunk, 256)
    groups = _build_groups(config, r, mode, traj, chunk)
    p = config.kernel
    rec = config.record
    if rec.gamma_per_step and n > 64:
        raise ValueError("per-step gamma is limited to n <= 64")
    if mode == "dense":
        n_obs = config.n_observed or n
    else:
        M = config.truncation_window or int(max(r.src.max(), r.dst.max())) + 1
        n_obs = config.n_observed or M

    given = _initial_omega(config, r)
    Xs, omegas = [], []
    for g, idx in groups:
        Xs.append(np.tile(X0[g.agents], (K, 1)))
        if given is not None:
            om = np.tile(given[idx], (K, 1))
        elif config.omega0 == "all_open":
            om = np.ones((K, g.m), dtype=bool)
        elif config.omega0 == "diagonal":
            om = np.zeros((K, g.m), dtype=bool)
        else:
            om = g.uniforms(0) < g.probabilities(Xs[-1], p)
        omegas.append(om)

    fixed_sum = float(X0.sum() - sum(X0[g.agents].sum() for g, _ in groups))
    all_edges = n * (n - 1)
    obs_cols = [(np.flatnonzero(g.agents < n_obs), g.agents[g.agents < n_obs]) for g, _ in groups]
    X_obs = np.tile(X0[:n_obs], (K, 1))

    active = np.ones(K, dtype=bool)
    stop_t = np.full(K, -1, dtype=np.int64)
    reason = np.empty(K, dtype=object)
    prev_all_one = np.zeros(K, dtype=bool)
    hist = {"W": [], "mean_X": [], "d": [], "gamma": [], "X": [], "omega": []}

    for t in range(config.max_steps + 1):
        probs = [g.probabilities(X, p) for (g, _), X in zip(groups, Xs)]
        W = np.max([X.max(axis=1) - X.min(axis=1) for X in Xs], axis=0)
        all_one = np.all([(1.0 - q).sum(axis=1) <= ALL_ONE_TOL for q in probs], axis=0)
        n_open = sum(om.sum(axis=1) for om in omegas)
        hist["W"].append(W)
        hist["mean_X"].append((fixed_sum + sum(X.sum(axis=1) for X in Xs)) / n)
        hist["d"].append((all_edges - n_open) / n**2)
        if rec.beliefs:
            for (loc, glob), X in zip(obs_cols, Xs):
                X_obs[:, glob] = X[:, loc]
            hist["X"].append(X_obs.copy())
        if rec.omegas or rec.gamma_per_step:
            full = np.zeros((K, r.m), dtype=bool)
            for (_, idx), om in zip(groups, omegas):
                full[:, idx] = om
            if rec.omegas:
                hist["omega"].append(full)
            if rec.gamma_per_step:
                mats = np.broadcast_to(np.eye(n, dtype=bool), (K, n, n)).copy()
                mats[:, r.src, r.dst] = full
                hist["gamma"].append(gamma_batch(transition_batch(mats, r)))

        newly = np.zeros(K, dtype=bool)
        if not config.fixed_horizon:
            tol_hit = active & (W < config.consensus_tol)
            reason[tol_hit] = np.where(all_one[tol_hit], "all_probs_one", "consensus_tol")
            late = active & ~tol_hit & prev_all_one & (t > 0)
            reason[late] = "all_probs_one"
            newly = tol_hit | late
        if t == config.max_steps:
            reason[active & ~newly] = "max_steps"
            newly = newly | active
        stop_t[newly] = t
        active &= ~newly
        if not active.any():
            break

        for i, ((g, _), X) in enumerate(zip(groups, Xs)):
            Xs[i] = np.where(active[:, None], g.advance(X, omegas[i]), X)
            fresh = g.uniforms(t + 1) < probs[i]
            omegas[i] = np.where(active[:, None], fresh, omegas[i])
        prev_all_one = all_one

    for (loc, glob), X in zip(obs_cols, Xs):
        X_obs[:, glob] = X[:, loc]
    T = len(hist["W"]) - 1
    gam = None
    if rec.gamma_per_step:
        gam = np.stack(hist["gamma"], axis=1)
        gam[np.arange(K), stop_t] = np.nan
    ens = EnsembleResult(
        W=np.stack(hist["W"], axis=1),
        mean_X=np.stack(hist["mean_X"], axis=1),
        edge_distance=np.stack(hist["d"], axis=1),
        stop_t=stop_t,
        stop_reasons=list(reason),
        final_X=X_obs.copy(),
        omega0_sampled=config.omega0 == "sample",
        gamma=gam,
        X=np.stack(hist["X"], axis=1) if rec.beliefs else None,
        omegas=np.stack(hist["omega"], axis=1) if rec.omegas else None,
    )
    if keep_records:
        ens.records = [_record(ens, k, n, r, int(traj[k])) for k in range(K)]
    assert T == int(stop_t.max())
    return ens


def _record(ens: EnsembleResult, k: int, n: int, r: WeightMatrix, run_id: int) -> TrajectoryRecord:
    T = int(ens.stop_t[k])
    cut = slice(0, T + 1)
    return TrajectoryRecord(
        n=n,
        W=ens.W[k, cut].copy(),
        mean_X=ens.mean_X[k, cut].copy(),
        edge_distance=ens.edge_distance[k, cut].copy(),
        stop_reason=ens.stop_reasons[k],
        final_X=ens.final_X[k].copy(),
        X=None if ens.X is None else ens.X[k, cut].copy(),
        omegas=None if ens.omegas is None else ens.omegas[k, cut].copy(),
        gamma=None if ens.gamma is None else ens.gamma[k, cut].copy(),
        src=r.src,
        dst=r.dst,
        run_id=run_id,
    )


# ---------------------------------------------------------------- public API


def run(config: RunConfig) -> TrajectoryRecord:
    """One trajectory (stream 0 of the master seed)."""
    return _simulate(config, [0], keep_records=True).records[0]


def run_ensemble(config: RunConfig, trajectories: int, keep_records: bool = False) -> EnsembleResult:
    """K independent trajectories; trajectory k draws its edges from stream k."""
    if trajectories < 1:
        raise ValueError("trajectories must be >= 1")
    return _simulate(config, range(trajectories), keep_records=keep_records)


def run_sparse(config: RunConfig) -> TrajectoryRecord:
    """Single trajectory in sparse mode: only support edges are sampled, inactive agents stay fixed."""
    if config.resolved_mode() != "sparse":
        raise ValueError("run_sparse needs mode 'sparse' (or 'auto' resolving to sparse)")
    return run(config)


@dataclass
class PairChainRecord:
    """The trajectory viewed as pairs (X(2t), X(2t+1)); W̄ and Γ̄ read the first component."""

    Wbar: np.ndarray
    Gammabar0: float
    bound: BoundCurve
    record: TrajectoryRecord

    @property
    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]] | None:
        X = self.record.X
        if X is None:
            return None
        return [(X[2 * t], X[2 * t + 1]) for t in range((len(X)) // 2)]


def pair_gamma0(config: RunConfig, samples: int = 20_000) -> float:
    """Γ̄ at the initial pair: Gamma(X0), exact when enumerable."""
    X0 = config.initial_beliefs()
    r = config.weight_matrix()
    kernel = config.edge_kernel()
    try:
        return Gamma_exact(X0, r, kernel)
    except EnumerationBudgetError:
        return Gamma_mc(X0, r, kernel, samples, RngStream(config.seed, 2**31))[0]


def run_pair_chain(config: RunConfig) -> PairChainRecord:
    rec = run(config)
    Wbar = rec.W[::2].copy()
    G = pair_gamma0(config)
    return PairChainRecord(Wbar, G, pair_bound_curve(float(Wbar[0]), G, len(Wbar) - 1), rec)


def initial_diameter(config: RunConfig) -> float:
    return diameter(config.initial_beliefs())
