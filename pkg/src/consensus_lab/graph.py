"""Directed-graph substrate: edge configurations, neighborhoods and pivots.

Agents are labelled ``1..n`` in every public function of this module. Edge
configurations only store the off-diagonal bits; self loops are always open.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def offdiagonal_pairs(n: int) -> np.ndarray:
    """Row-major list of the 0-based off-diagonal pairs ``(u, v)``, shape (n(n-1), 2)."""
    u, v = np.nonzero(~np.eye(n, dtype=bool))
    return np.stack([u, v], axis=1)


def _check_agent(n: int, v: int) -> None:
    if not 1 <= v <= n:
        raise ValueError(f"agent id {v} out of range 1..{n}")


@dataclass(frozen=True)
class EdgeConfig:
    """Open/closed state of every directed channel of the complete graph on n agents.

    ``bits`` packs the n(n-1) off-diagonal states in row-major order: bit k is
    the k-th pair of ``offdiagonal_pairs(n)``. The diagonal is implicit.
    """

    n: int
    bits: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.bits < (1 << self.n_free):
            raise ValueError("bits outside the off-diagonal range")

    @property
    def n_free(self) -> int:
        return self.n * (self.n - 1)

    @classmethod
    def all_open(cls, n: int) -> "EdgeConfig":
        return cls(n, (1 << (n * (n - 1))) - 1)

    @classmethod
    def diagonal_only(cls, n: int) -> "EdgeConfig":
        return cls(n, 0)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "EdgeConfig":
        """Build from 1-based open pairs; diagonal pairs are accepted and ignored."""
        m = np.eye(n, dtype=bool)
        for u, v in pairs:
            _check_agent(n, u)
            _check_agent(n, v)
            m[u - 1, v - 1] = True
        return cls.from_matrix(m)

    @classmethod
    def from_matrix(cls, matrix) -> "EdgeConfig":
        m = np.asarray(matrix, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("edge matrix must be square")
        if not m.diagonal().all():
            raise ValueError("self loops must be open (omega_uu = 1)")
        return cls.from_offdiagonal(m[~np.eye(len(m), dtype=bool)])

    @classmethod
    def from_offdiagonal(cls, flags) -> "EdgeConfig":
        flags = np.asarray(flags, dtype=bool)
        n = int(round((1 + np.sqrt(1 + 4 * len(flags))) / 2))
        if n * (n - 1) != len(flags):
            raise ValueError(f"{len(flags)} flags do not fit an n(n-1) layout")
        bits = 0
        for k in np.flatnonzero(flags):
            bits |= 1 << int(k)
        return cls(n, bits)

    @classmethod
    def parse(cls, text: str) -> "EdgeConfig":
        """Parse an n*n row-major 0/1 string; ``/``, ``,`` and whitespace are ignored."""
        digits = [c for c in text if c not in "/, \t\n"]
        if set(digits) - {"0", "1"}:
            raise ValueError(f"bad edge string {text!r}")
        n = int(round(np.sqrt(len(digits))))
        if n * n != len(digits) or n < 1:
            raise ValueError(f"edge string of length {len(digits)} is not n*n")
        return cls.from_matrix(np.array([c == "1" for c in digits]).reshape(n, n))

    def offdiagonal(self) -> np.ndarray:
        k = np.arange(self.n_free)
        if self.n_free <= 62:
            return ((self.bits >> k) & 1).astype(bool)
        return np.array([(self.bits >> int(i)) & 1 for i in k], dtype=bool)

    @property
    def matrix(self) -> np.ndarray:
        """Boolean n x n matrix, entry [u-1, v-1] is omega_{u,v}."""
        m = np.eye(self.n, dtype=bool)
        m[~np.eye(self.n, dtype=bool)] = self.offdiagonal()
        return m

    def format(self) -> str:
        return "/".join("".join("1" if b else "0" for b in row) for row in self.matrix)

    def n_closed(self) -> int:
        return self.n_free - bin(self.bits).count("1")


@dataclass(frozen=True)
class SparseEdgeConfig:
    """Edge states restricted to a finite support (1-based pairs, diagonal implicit)."""

    support: tuple[tuple[int, int], ...]
    open: tuple[bool, ...]

    def __post_init__(self):
        if len(self.support) != len(self.open):
            raise ValueError("support and open flags differ in length")

    def open_pairs(self) -> set[tuple[int, int]]:
        return {e for e, o in zip(self.support, self.open) if o}


def open_edges(omega: EdgeConfig) -> set[tuple[int, int]]:
    u, v = np.nonzero(omega.matrix)
    return {(int(a) + 1, int(b) + 1) for a, b in zip(u, v)}


def in_neighborhood(omega: EdgeConfig, v: int) -> set[int]:
    _check_agent(omega.n, v)
    return {int(u) + 1 for u in np.flatnonzero(omega.matrix[:, v - 1])}


def out_neighborhood(omega: EdgeConfig, v: int) -> set[int]:
    _check_agent(omega.n, v)
    return {int(u) + 1 for u in np.flatnonzero(omega.matrix[v - 1])}


def iterated_out_neighborhood(omega: EdgeConfig, v: int, k: int) -> set[int]:
    """Agents reachable from v along at most k open edges."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_agent(omega.n, v)
    m = omega.matrix
    reached = m[v - 1].copy()
    for _ in range(k - 1):
        nxt = m[reached].any(axis=0)
        if (nxt == reached).all():
            break
        reached = nxt
    return {int(u) + 1 for u in np.flatnonzero(reached)}


def pivots(omega: EdgeConfig) -> set[int]:
    """Agents whose one-step closed out-neighborhood is the whole agent set."""
    return {int(w) + 1 for w in np.flatnonzero(omega.matrix.all(axis=1))}


def support_components(
    support: Iterable[tuple[int, int]], n: int, connection: str = "strong"
) -> list[set[int]]:
    """Partition ``1..n`` into components of the spanning graph of ``support``.

    ``connection="strong"`` groups mutually reachable agents. ``"weak"`` ignores
    edge direction; weak components are the blocks whose beliefs never
    influence each other. Components are ordered by their smallest agent id.
    """
    pairs = np.array([(u - 1, v - 1) for u, v in support], dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
        raise ValueError("support pair outside 1..n")
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=True, connection=connection)
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    comps = [set((g + 1).tolist()) for g in np.split(order, splits)]
    return sorted(comps, key=min)
