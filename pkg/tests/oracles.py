"""Slow, loop-based reference implementations used as test oracles.

These deliberately avoid the package's vectorized code paths: matrices are
built entry by entry and expectations come from itertools enumeration.
"""

from __future__ import annotations

from itertools import product


def transition(open_pairs: set, n: int, r=None) -> list[list[float]]:
    """P[v][u] for 0-based agents; open_pairs holds 0-based (u, v) channels u -> v."""
    P = [[0.0] * n for _ in range(n)]
    for v in range(n):
        weights = []
        for u in range(n):
            is_open = u == v or (u, v) in open_pairs
            ruv = 1.0 if u == v else (1.0 if r is None else r.get((u, v), 0.0))
            weights.append(ruv if is_open else 0.0)
        total = sum(weights)
        for u in range(n):
            P[v][u] = weights[u] / total
    return P


def gamma(P: list[list[float]]) -> float:
    n = len(P)
    if n == 1:
        return 1.0
    best = float("inf")
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            s = 0.0
            for w in range(n):
                for z in range(n):
                    s += min(P[u][w] * P[v][z], P[u][z] * P[v][w])
            best = min(best, s)
    return best


def step(X: list[float], P: list[list[float]]) -> list[float]:
    return [sum(P[v][u] * X[u] for u in range(len(X))) for v in range(len(X))]


def offdiag(n: int) -> list[tuple[int, int]]:
    return [(u, v) for u in range(n) for v in range(n) if u != v]


def Gamma(X: list[float], p, r=None) -> float:
    """E[gamma] under independent edges (u, v) open with probability p(|X_v - X_u|)."""
    n = len(X)
    edges = offdiag(n) if r is None else sorted(r)
    probs = [p(abs(X[v] - X[u])) for u, v in edges]
    total = 0.0
    for bits in product((0, 1), repeat=len(edges)):
        mass = 1.0
        for b, q in zip(bits, probs):
            mass *= q if b else 1.0 - q
        if mass == 0.0:
            continue
        opened = {e for e, b in zip(edges, bits) if b}
        total += mass * gamma(transition(opened, n, r))
    return total


def Gamma_uniform(n: int, q: float) -> float:
    """E[gamma] when every off-diagonal edge opens with probability q."""
    edges = offdiag(n)
    total = 0.0
    for bits in product((0, 1), repeat=len(edges)):
        k = sum(bits)
        mass = q**k * (1 - q) ** (len(edges) - k)
        if mass == 0.0:
            continue
        total += mass * gamma(transition({e for e, b in zip(edges, bits) if b}, n))
    return total
