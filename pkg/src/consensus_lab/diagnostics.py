"""Convergence certificates: gamma, Gamma, bound curves and theorem checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import WeightMatrix, diameter, transition_matrix
from .graph import EdgeConfig, pivots
from .noise import (
    ConfidenceFunction,
    EdgeKernel,
    RngStream,
    block_counters,
    enumerate_states,
    product_masses,
)

ENUMERATION_BUDGET = 22
SLACK = 1e-12
_CHUNK_ELEMENTS = 4_000_000


class EnumerationBudgetError(ValueError):
    """Raised when an exact expectation would enumerate more than 2**22 configurations."""


# ---------------------------------------------------------------- gamma


def gamma_pairs(P: np.ndarray) -> np.ndarray:
    """Pair sums S[b, u, v] = sum_{w,z} min(P_uw P_vz, P_uz P_vw) for a stack of matrices."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 2:
        return gamma_pairs(P[None])[0]
    B, n, _ = P.shape
    out = np.empty((B, n, n))
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n**4))
    for s in range(0, B, chunk):
        p = P[s : s + chunk]
        a = p[:, :, None, :, None] * p[:, None, :, None, :]
        out[s : s + chunk] = np.minimum(a, a.swapaxes(3, 4)).sum(axis=(3, 4))
    return out


def gamma_batch(P: np.ndarray) -> np.ndarray:
    """gamma of each transition matrix in a (B, n, n) stack; 1 when n = 1."""
    P = np.asarray(P, dtype=float)
    B, n, _ = P.shape
    if n == 1:
        return np.ones(B)
    s = gamma_pairs(P)
    s[:, np.eye(n, dtype=bool)] = np.inf
    return np.clip(s.reshape(B, -1).min(axis=1), 0.0, 1.0)


def transition_batch(omegas: np.ndarray, r: WeightMatrix | None = None) -> np.ndarray:
    """Transition matrices for a (B, n, n) stack of boolean edge matrices."""
    om = np.asarray(omegas, dtype=bool)
    n = om.shape[-1]
    a = om * (np.ones((n, n)) if r is None else r.dense())
    return (a / a.sum(axis=-2, keepdims=True)).swapaxes(-1, -2)


@dataclass(frozen=True)
class ErgodicityReport:
    gamma: float
    argmin_pair: tuple[int, int] | None
    pivot_set: frozenset
    common_in_neighbor_ok: bool
    single_agent: bool = False


def common_in_neighbor_ok(P: np.ndarray) -> bool:
    """Every pair of agents listens to at least one shared agent (positive transition weight)."""
    S = np.asarray(P) > 0
    shared = (S[:, None, :] & S[None, :, :]).any(axis=2)
    return bool(shared.all())


def gamma(omega: EdgeConfig, r: WeightMatrix | None = None) -> ErgodicityReport:
    """Coefficient gamma(omega) with its minimizing pair, pivots and the common-in-neighbor predicate."""
    P = transition_matrix(omega, r)
    n = len(P)
    piv = frozenset(pivots(omega))
    if n == 1:
        return ErgodicityReport(1.0, None, piv, True, single_agent=True)
    s = gamma_pairs(P)
    np.fill_diagonal(s, np.inf)
    u, v = np.unravel_index(np.argmin(s), s.shape)
    g = float(np.clip(s[u, v], 0.0, 1.0))
    return ErgodicityReport(g, (int(u) + 1, int(v) + 1), piv, common_in_neighbor_ok(P))


def gamma_pivot_lower_bound(omega: EdgeConfig, r: WeightMatrix | None = None) -> float | None:
    """max over pivots w of min(P_uw, P_vw)^2 at the minimizing pair; None without pivots."""
    rep = gamma(omega, r)
    if not rep.pivot_set or rep.argmin_pair is None:
        return None
    P = transition_matrix(omega, r)
    u, v = rep.argmin_pair
    return max(min(P[u - 1, w - 1], P[v - 1, w - 1]) ** 2 for w in rep.pivot_set)


# ---------------------------------------------------------------- Gamma


def _support(n: int, r: WeightMatrix | None, kernel: EdgeKernel) -> WeightMatrix:
    if r is not None:
        if r.n != n:
            raise ValueError(f"weights are for {r.n} agents, beliefs have {n}")
        return r
    if kernel.weights is not None:
        return kernel.weights
    return WeightMatrix.uniform(n)


def expected_gamma(n: int, r: WeightMatrix, probs: np.ndarray) -> float:
    """Exact E[gamma] under independent support edges with open probabilities ``probs``."""
    probs = np.asarray(probs, dtype=float)
    free = np.flatnonzero((probs > 0) & (probs < 1))
    if len(free) > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(
            f"{len(free)} random edges exceed the enumeration budget of {ENUMERATION_BUDGET}; use Gamma_mc"
        )
    base = np.eye(n, dtype=bool)
    sure = probs >= 1
    base[r.src[sure], r.dst[sure]] = True
    total = 0.0
    count = 1 << len(free)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n**4))
    for s in range(0, count, chunk):
        states = enumerate_states(len(free), s, min(count, s + chunk))
        om = np.broadcast_to(base, (len(states), n, n)).copy()
        om[:, r.src[free], r.dst[free]] = states
        g = gamma_batch(transition_batch(om, r))
        total += float(product_masses(states, probs[free]) @ g)
    return total


def Gamma_exact(X, r: WeightMatrix | None, kernel: EdgeKernel) -> float:
    """Gamma(X) = E[gamma | X] by enumerating the edges whose open probability is strictly between 0 and 1."""
    X = np.asarray(X, dtype=float)
    w = _support(len(X), r, kernel)
    probs = kernel.confidence(np.abs(X[w.dst] - X[w.src]))
    return expected_gamma(len(X), w, np.atleast_1d(probs))


def _gamma_samples(n: int, r: WeightMatrix, probs: np.ndarray, samples: int, rng: RngStream) -> np.ndarray:
    m = len(probs)
    q = block_counters(m)
    gen = rng.generator(m)
    out = np.empty(samples)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n**4))
    for s in range(0, samples, chunk):
        k = min(chunk, samples - s)
        u = gen.random(k * 4 * q).reshape(k, 4 * q)[:, :m]
        om = np.broadcast_to(np.eye(n, dtype=bool), (k, n, n)).copy()
        om[:, r.src, r.dst] = u < probs
        out[s : s + k] = gamma_batch(transition_batch(om, r))
    return out


def Gamma_mc(
    X, r: WeightMatrix | None, kernel: EdgeKernel, samples: int, rng: RngStream
) -> tuple[float, float]:
    """Monte-Carlo estimate of Gamma(X) and its standard error."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    X = np.asarray(X, dtype=float)
    w = _support(len(X), r, kernel)
    probs = np.atleast_1d(kernel.confidence(np.abs(X[w.dst] - X[w.src])))
    g = _gamma_samples(len(X), w, probs, samples, rng)
    se = float(g.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return float(g.mean()), se


def Gamma_of_diameter(
    w: float,
    r: WeightMatrix | None,
    kernel: EdgeKernel,
    n: int | None = None,
    samples: int = 100_000,
    rng: RngStream | None = None,
) -> float:
    """E[gamma] when every support edge opens with probability p(w).

    Falls back to a Monte-Carlo estimate past the enumeration budget.
    """
    if n is None:
        if r is None and kernel.weights is None:
            raise ValueError("agent count unknown: pass n or weights")
        n = (r or kernel.weights).n
    sup = _support(n, r, kernel)
    probs = np.full(sup.m, kernel.confidence(w))
    try:
        return expected_gamma(n, sup, probs)
    except EnumerationBudgetError:
        return float(_gamma_samples(n, sup, probs, samples, rng or RngStream(0)).mean())


# ---------------------------------------------------------------- bounds


@dataclass(frozen=True)
class BoundCurve:
    values: np.ndarray
    W0: float
    Gamma0: float
    base: float

    def __getitem__(self, t):
        return self.values[t]

    def __len__(self):
        return len(self.values)


def _check_unit(name: str, x: float) -> None:
    if not 0 <= x <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def bound_curve(W0: float, Gamma0: float, horizon: int) -> BoundCurve:
    """t -> W0 (1 - Gamma0)^t for t = 0..horizon."""
    _check_unit("W0", W0)
    _check_unit("Gamma0", Gamma0)
    base = 1.0 - Gamma0
    return BoundCurve(W0 * base ** np.arange(horizon + 1, dtype=float), W0, Gamma0, base)


def pair_bound_curve(Wbar0: float, Gammabar0: float, horizon: int) -> BoundCurve:
    """t -> Wbar0 (1 - Gammabar0)^(2t); one unit of t is two steps of the original chain."""
    _check_unit("Wbar0", Wbar0)
    _check_unit("Gammabar0", Gammabar0)
    base = (1.0 - Gammabar0) ** 2
    return BoundCurve(Wbar0 * base ** np.arange(horizon + 1, dtype=float), Wbar0, Gammabar0, base)


def edge_distance_to_full(omega: EdgeConfig) -> float:
    """Fraction of the n^2 ordered pairs that are closed."""
    return omega.n_closed() / omega.n**2


# ---------------------------------------------------------------- verification


@dataclass
class Check:
    name: str
    status: str  # pass | fail | skipped
    margin: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.margin = float(self.margin) + 0.0  # no negative zero in reports

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def verify_trajectory(traj, r: WeightMatrix | None = None, slack: float = SLACK) -> list[dict]:
    """Per-step contraction and monotonicity of W along a recorded trajectory.

    ``traj`` needs ``W`` and ``omega_matrices()`` (the record must hold omegas).
    Returns the violations; an empty list means every step passed.
    """
    W = np.asarray(traj.W, dtype=float)
    oms = traj.omega_matrices()
    if oms is None:
        raise ValueError("trajectory was recorded without omegas")
    if len(oms) < len(W) - 1:
        raise ValueError("malformed trajectory: fewer omegas than steps")
    T = len(W) - 1
    if T == 0:
        return []
    g = gamma_batch(transition_batch(oms[:T], r))
    out = []
    for t in range(T):
        rhs = (1.0 - g[t]) * W[t]
        if W[t + 1] > rhs + slack:
            out.append({"t": t, "check": "contraction", "lhs": float(W[t + 1]), "rhs": float(rhs)})
        if W[t + 1] > W[t] + slack:
            out.append({"t": t, "check": "monotone", "lhs": float(W[t + 1]), "rhs": float(W[t])})
    return out


def _se(a: np.ndarray) -> np.ndarray:
    k = a.shape[0]
    if k < 2:
        return np.zeros(a.shape[1:])
    return a.std(axis=0, ddof=1) / np.sqrt(k)


@dataclass
class EnsembleReport:
    Gamma_X0: float
    Gamma0: float
    hypotheses_met: bool
    table: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def flags(self) -> list[str]:
        return [] if self.hypotheses_met else ["Gamma(X0)=0, theorem hypotheses not met"]


def verify_ensemble(ens, X0, r: WeightMatrix | None, kernel: EdgeKernel, z: float = 3.0) -> EnsembleReport:
    """Ensemble checks of the geometric bound, the supermartingale property and the edge-distance bound.

    ``ens`` provides ``W`` and ``edge_distance`` arrays of shape (K, T + 1)
    and the flag ``omega0_sampled``; its trajectories share X0 and kernel.
    """
    W = np.asarray(ens.W, dtype=float)
    if W.shape[0] < 2:
        raise ValueError("need at least 2 trajectories")
    X0 = np.asarray(X0, dtype=float)
    n = len(X0)
    W0 = diameter(X0)
    try:
        G_X0 = Gamma_exact(X0, r, kernel)
    except EnumerationBudgetError:
        G_X0, _ = Gamma_mc(X0, r, kernel, 20_000, RngStream(0))
    G0 = Gamma_of_diameter(W0, r, kernel, n=n)
    T = W.shape[1] - 1
    bound = bound_curve(W0, G0, T).values
    mean, se = W.mean(axis=0), _se(W)
    checks = []

    excess = mean - z * se - bound
    worst = int(np.argmax(excess))
    checks.append(
        Check(
            "geometric_bound",
            "fail" if excess[worst] > SLACK else "pass",
            float(-excess[worst]),
            {"worst_t": worst, "Gamma0": G0},
        )
    )

    if T >= 1:
        diff = W[:, 1:] - W[:, :-1]
        excess = diff.mean(axis=0) - z * _se(diff)
        worst = int(np.argmax(excess))
        checks.append(
            Check("supermartingale", "fail" if excess[worst] > SLACK else "pass", float(-excess[worst]), {"worst_t": worst + 1})
        )
        D = np.asarray(ens.edge_distance, dtype=float)
        ref = 1.0 - kernel.confidence(W[:, :-1])
        diff = D[:, 1:] - ref
        excess = diff.mean(axis=0) - z * _se(diff)
        worst = int(np.argmax(excess))
        checks.append(
            Check("edge_distance", "fail" if excess[worst] > SLACK else "pass", float(-excess[worst]), {"worst_t": worst + 1})
        )

    table = {"t": np.arange(T + 1), "mean_W": mean, "se_W": se, "bound": bound}
    return EnsembleReport(G_X0, G0, G_X0 > 0, table, checks)


@dataclass
class PivotScan:
    n: int
    total: int
    discrepancies: list  # (EdgeConfig, gamma, pivot set) with gamma>0 xor pivots nonempty
    forward_violations: list  # pivots nonempty but gamma = 0
    cin_mismatches: list  # gamma>0 disagrees with the common-in-neighbor predicate


def pivot_lemma_scan(n: int, r: WeightMatrix | None = None) -> PivotScan:
    """Enumerate every edge configuration and compare gamma > 0 with the pivot criterion."""
    m = n * (n - 1)
    if m > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(f"n={n} has {m} off-diagonal edges, over the budget of {ENUMERATION_BUDGET}")
    total = 1 << m
    off = ~np.eye(n, dtype=bool)
    disc, fwd, cin = [], [], []
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n**4))
    for s in range(0, total, chunk):
        states = enumerate_states(m, s, min(total, s + chunk))
        om = np.broadcast_to(np.eye(n, dtype=bool), (len(states), n, n)).copy()
        om[:, off] = states
        P = transition_batch(om, r)
        g = gamma_batch(P)
        has_pivot = om.all(axis=2).any(axis=1)
        S = P > 0
        ok = (S[:, :, None, :] & S[:, None, :, :]).any(axis=3).all(axis=(1, 2))
        pos = g > 0
        for i in np.flatnonzero(pos != has_pivot):
            cfg = EdgeConfig(n, s + int(i))
            disc.append((cfg, float(g[i]), frozenset(pivots(cfg))))
        for i in np.flatnonzero(has_pivot & ~pos):
            fwd.append((EdgeConfig(n, s + int(i)), float(g[i])))
        for i in np.flatnonzero(pos != ok):
            cin.append((EdgeConfig(n, s + int(i)), float(g[i])))
    return PivotScan(n, total, disc, fwd, cin)


def holley_margin(X, p: ConfidenceFunction) -> float:
    """min over off-diagonal edges of p(g)(1 - p(W)) - p(W)(1 - p(g)), g the edge gap."""
    X = np.asarray(X, dtype=float)
    gaps = np.abs(X[:, None] - X[None, :])[~np.eye(len(X), dtype=bool)]
    pe, pw = p(gaps), p(diameter(X))
    return float(np.min(pe * (1 - pw) - pw * (1 - pe)))
