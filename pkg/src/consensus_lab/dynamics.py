"""Deterministic part of the dynamics: weights, transition matrix, averaging step."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import EdgeConfig, offdiagonal_pairs


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Confidence weights r_{u,v} > 0 on a sparse support, r_{u,u} = 1.

    ``src``, ``dst`` and ``w`` hold the off-diagonal support as 0-based
    arrays sorted row-major by (src, dst). r_{u,v} is the confidence agent v
    puts in the belief of agent u.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    w: np.ndarray
    _dense: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        w = np.asarray(self.w, dtype=float)
        if not (len(src) == len(dst) == len(w)):
            raise ValueError("src, dst, w must have equal length")
        if len(src):
            if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= self.n:
                raise ValueError("support pair outside the agent range")
            if (src == dst).any():
                raise ValueError("diagonal weights are fixed to 1; list off-diagonal pairs only")
            if (w <= 0).any() or (w > 1).any():
                raise ValueError("weights must lie in (0, 1]")
        order = np.lexsort((dst, src))
        key = src[order] * self.n + dst[order]
        if len(key) > 1 and (np.diff(key) == 0).any():
            raise ValueError("duplicate support pair")
        object.__setattr__(self, "src", src[order])
        object.__setattr__(self, "dst", dst[order])
        object.__setattr__(self, "w", w[order])

    @classmethod
    def uniform(cls, n: int) -> "WeightMatrix":
        pairs = offdiagonal_pairs(n)
        return cls(n, pairs[:, 0], pairs[:, 1], np.ones(len(pairs)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "WeightMatrix":
        """Weights from 1-based ``(u, v, r)`` triples; diagonal triples must carry r = 1."""
        src, dst, w = [], [], []
        for u, v, r in edges:
            if u == v:
                if r != 1:
                    raise ValueError(f"self confidence r_{{{u},{u}}} must be 1")
                continue
            src.append(u - 1)
            dst.append(v - 1)
            w.append(float(r))
        return cls(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w))

    @classmethod
    def from_dense(cls, matrix) -> "WeightMatrix":
        r = np.asarray(matrix, dtype=float)
        n = len(r)
        if not np.allclose(np.diag(r), 1.0):
            raise ValueError("diagonal weights must be 1")
        off = ~np.eye(n, dtype=bool) & (r > 0)
        src, dst = np.nonzero(off)
        return cls(n, src, dst, r[src, dst])

    @classmethod
    def random_sparse(
        cls, n: int, density: float, rng: np.random.Generator, low: float = 0.0, high: float = 1.0
    ) -> "WeightMatrix":
        """Each off-diagonal pair kept with probability ``density``, weight uniform on (low, high]."""
        if not 0 <= density <= 1:
            raise ValueError("density must lie in [0, 1]")
        if n <= 4096:
            pairs = offdiagonal_pairs(n)
            pairs = pairs[rng.random(len(pairs)) < density]
        else:
            total = n * (n - 1)
            k = rng.binomial(total, density)
            idx = rng.choice(total, size=k, replace=False)
            u = idx // (n - 1)
            v = idx % (n - 1)
            pairs = np.stack([u, v + (v >= u)], axis=1)
        w = high - (high - low) * rng.random(len(pairs))
        return cls(n, pairs[:, 0], pairs[:, 1], w)

    @property
    def m(self) -> int:
        return len(self.src)

    def dense(self) -> np.ndarray:
        """n x n matrix with entry [u, v] = r_{u+1, v+1}, diagonal 1."""
        if self._dense is None:
            r = np.eye(self.n)
            r[self.src, self.dst] = self.w
            object.__setattr__(self, "_dense", r)
        return self._dense

    def support_pairs(self) -> list[tuple[int, int]]:
        return [(int(u) + 1, int(v) + 1) for u, v in zip(self.src, self.dst)]

    def is_full(self) -> bool:
        return self.m == self.n * (self.n - 1)

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.w, other.w)
        )


def _omega_matrix(omega) -> np.ndarray:
    if isinstance(omega, EdgeConfig):
        return omega.matrix
    m = np.asarray(omega, dtype=bool)
    if not m.diagonal().all():
        raise ValueError("self loops must be open (omega_uu = 1)")
    return m


def _weights(r: WeightMatrix | None, n: int) -> np.ndarray:
    if r is None:
        return np.ones((n, n))
    if r.n != n:
        raise ValueError(f"weights are for {r.n} agents, configuration has {n}")
    return r.dense()


def transition_matrix(omega, r: WeightMatrix | None = None) -> np.ndarray:
    """Row-stochastic P(omega): P[v, u] = r_uv w_uv / sum_w r_wv w_wv (0-based rows/cols)."""
    om = _omega_matrix(omega)
    a = _weights(r, len(om)) * om
    return (a / a.sum(axis=0)).T


def step(X, omega, r: WeightMatrix | None = None) -> np.ndarray:
    """One synchronous averaging update of all beliefs.

    Uses X_v + sum_u a_uv (X_u - X_v) / sum_u a_uv, which keeps consensus
    configurations exactly fixed.
    """
    X = np.asarray(X, dtype=float)
    om = _omega_matrix(omega)
    a = _weights(r, len(om)) * om
    if len(X) != len(a):
        raise ValueError("belief vector and edge configuration differ in size")
    num = (a * (X[:, None] - X[None, :])).sum(axis=0)
    out = X + num / a.sum(axis=0)
    return np.clip(out, X.min(), X.max())


def diameter(X) -> float:
    X = np.asarray(X, dtype=float)
    return float(X.max() - X.min())


def consensus_projection(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.full_like(X, X.mean())


def edge_gap(X, e: tuple[int, int]) -> float:
    """Belief gap X_u - X_v along the ordered pair e = (v, u), 1-based ids."""
    X = np.asarray(X, dtype=float)
    v, u = e
    if not (1 <= v <= len(X) and 1 <= u <= len(X)):
        raise ValueError(f"pair {e} out of range 1..{len(X)}")
    return float(X[u - 1] - X[v - 1])
