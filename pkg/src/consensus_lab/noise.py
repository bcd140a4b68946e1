"""Edge-activation kernel: confidence functions, product measures and sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import WeightMatrix
from .graph import EdgeConfig, SparseEdgeConfig

FAMILIES = {
    "constant": (),
    "linear": ("beta",),
    "quadratic": ("beta",),
    "exponential": ("lam",),
    "threshold": ("eps", "delta"),
}


@dataclass(frozen=True)
class ConfidenceFunction:
    """Nonincreasing p: [0, 1] -> [0, 1] with p(0) = 1.

    constant       p(x) = 1
    linear         p(x) = 1 - beta x
    quadratic      p(x) = 1 - beta x^2
    exponential    p(x) = exp(-lam x)
    threshold      p(x) = 1 if x < eps else delta
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown confidence family {self.family!r}; choose from {sorted(FAMILIES)}")
        names = FAMILIES[self.family]
        if set(self.params) != set(names):
            raise ValueError(f"{self.family} takes parameters {list(names)}, got {sorted(self.params)}")
        params = {k: float(self.params[k]) for k in names}
        object.__setattr__(self, "params", params)
        if self.family in ("linear", "quadratic") and not 0 <= params["beta"] <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.family == "exponential" and params["lam"] < 0:
            raise ValueError("lam must be >= 0")
        if self.family == "threshold":
            if not 0 < params["eps"] <= 1:
                raise ValueError("eps must lie in (0, 1]")
            if not 0 <= params["delta"] <= 1:
                raise ValueError("delta must lie in [0, 1]")

    # constructors read better at call sites than dict literals
    @classmethod
    def constant(cls) -> "ConfidenceFunction":
        return cls("constant", {})

    @classmethod
    def linear(cls, beta: float) -> "ConfidenceFunction":
        return cls("linear", {"beta": beta})

    @classmethod
    def quadratic(cls, beta: float) -> "ConfidenceFunction":
        return cls("quadratic", {"beta": beta})

    @classmethod
    def exponential(cls, lam: float) -> "ConfidenceFunction":
        return cls("exponential", {"lam": lam})

    @classmethod
    def threshold(cls, eps: float, delta: float) -> "ConfidenceFunction":
        return cls("threshold", {"eps": eps, "delta": delta})

    @classmethod
    def parse(cls, text: str) -> "ConfidenceFunction":
        """Parse the short form ``family[:a[,b]]``, e.g. ``linear:0.5`` or ``threshold:0.5,0``."""
        family, _, rest = text.partition(":")
        family = family.strip().lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown confidence family {family!r}")
        values = [float(x) for x in rest.split(",") if x.strip()]
        names = FAMILIES[family]
        if len(values) != len(names):
            raise ValueError(f"{family} expects {len(names)} parameter(s), got {len(values)}")
        return cls(family, dict(zip(names, values)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "constant":
            out = np.ones_like(x)
        elif self.family == "linear":
            out = 1.0 - p["beta"] * x
        elif self.family == "quadratic":
            out = 1.0 - p["beta"] * x * x
        elif self.family == "exponential":
            out = np.exp(-p["lam"] * x)
        else:
            out = np.where(x < p["eps"], 1.0, p["delta"])
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    @property
    def is_concave(self) -> bool:
        if self.family == "exponential":
            return self.params["lam"] == 0
        if self.family == "threshold":
            return self.params["delta"] == 1
        return True

    @property
    def slope_at_zero(self) -> float:
        """lim_{x -> 0+} (1 - p(x)) / x."""
        if self.family == "linear":
            return self.params["beta"]
        if self.family == "exponential":
            return self.params["lam"]
        return 0.0

    @property
    def finite_slope_at_zero(self) -> bool:
        return math.isfinite(self.slope_at_zero)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConfidenceFunction":
        return cls(d["family"], dict(d.get("params", {})))


@dataclass(frozen=True)
class EdgeKernel:
    """Product Bernoulli law of the off-diagonal support edges given beliefs.

    With ``weights=None`` the support is every off-diagonal pair.
    """

    confidence: ConfidenceFunction
    weights: WeightMatrix | None = None

    def support(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.weights is None:
            r = WeightMatrix.uniform(n)
        else:
            if self.weights.n != n:
                raise ValueError(f"kernel support is for {self.weights.n} agents, got {n}")
            r = self.weights
        return r.src, r.dst

    def edge_probabilities(self, X) -> np.ndarray:
        """Open probability of each support edge, in row-major support order."""
        X = np.asarray(X, dtype=float)
        src, dst = self.support(len(X))
        return self.confidence(np.abs(X[dst] - X[src]))


# trajectory streams use 1-tuple spawn keys (k,); auxiliary keys live in 2-tuples
_RESERVED = 2**32 - 1


def component_seed(seed: int, component: int) -> int:
    """Master seed used by support component ``component`` in sparse runs (component 0 keeps ``seed``)."""
    if component == 0:
        return int(seed)
    ss = np.random.SeedSequence(int(seed), spawn_key=(_RESERVED - 1, component))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RngStream:
    """Counter-based uniform stream addressed by (seed, trajectory, step).

    Each trajectory owns a Philox key; the block for step t starts at counter
    t * ceil(m / 4), so consuming blocks in order from one generator and
    jumping straight to (trajectory, step) yield the same numbers.
    """

    seed: int
    trajectory: int = 0
    step: int = 0

    def key(self) -> np.ndarray:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.trajectory),))
        return ss.generate_state(2, np.uint64)

    def generator(self, m: int) -> np.random.Generator:
        """Generator positioned at the start of this stream's step block for m edges."""
        bitgen = np.random.Philox(key=self.key())
        bitgen.advance(self.step * block_counters(m))
        return np.random.Generator(bitgen)

    def uniforms(self, m: int) -> np.ndarray:
        return self.generator(m).random(block_counters(m) * 4)[:m]


def block_counters(m: int) -> int:
    """Philox counters consumed per step when m edges are sampled."""
    return max(1, -(-m // 4))


X0_STREAM = 0xB0
WEIGHTS_STREAM = 0xB1


def aux_generator(seed: int, tag: int) -> np.random.Generator:
    """Generator for auxiliary randomness (initial beliefs, random weights), disjoint from edge streams."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_RESERVED, tag)))


def edge_open_probability(X, e: tuple[int, int], p: ConfidenceFunction) -> float:
    """p(|X_u - X_v|) for the 1-based pair e = (u, v); exactly 1 on the diagonal."""
    X = np.asarray(X, dtype=float)
    u, v = e
    if not (1 <= u <= len(X) and 1 <= v <= len(X)):
        raise ValueError(f"pair {e} out of range 1..{len(X)}")
    if u == v:
        return 1.0
    return float(p(abs(X[v - 1] - X[u - 1])))


def sample_edge_config(X, kernel: EdgeKernel, rng: RngStream, sparse: bool = False):
    """Draw omega ~ Pi(.|X): support edge k opens iff U_k < p_k, U from the stream block."""
    X = np.asarray(X, dtype=float)
    probs = kernel.edge_probabilities(X)
    is_open = rng.uniforms(len(probs)) < probs
    src, dst = kernel.support(len(X))
    if sparse:
        support = tuple((int(u) + 1, int(v) + 1) for u, v in zip(src, dst))
        return SparseEdgeConfig(support, tuple(bool(b) for b in is_open))
    m = np.eye(len(X), dtype=bool)
    m[src, dst] = is_open
    return EdgeConfig.from_matrix(m)


def _support_states(omega, n: int, kernel: EdgeKernel) -> np.ndarray:
    m = omega.matrix if isinstance(omega, EdgeConfig) else np.asarray(omega, dtype=bool)
    if m.shape != (n, n):
        raise ValueError("edge configuration and beliefs differ in size")
    if not m.diagonal().all():
        raise ValueError("self loops must be open (omega_uu = 1)")
    return m


def _product_mass(m: np.ndarray, probs: np.ndarray, kernel: EdgeKernel) -> float:
    n = len(m)
    src, dst = kernel.support(n)
    on_support = np.zeros((n, n), dtype=bool)
    on_support[src, dst] = True
    np.fill_diagonal(on_support, True)
    if (m & ~on_support).any():
        return 0.0  # off-support edges are never opened
    states = m[src, dst]
    return float(np.prod(np.where(states, probs, 1.0 - probs)))


def config_probability(omega, X, kernel: EdgeKernel) -> float:
    """Pi(omega | X), product over off-diagonal support edges."""
    X = np.asarray(X, dtype=float)
    m = _support_states(omega, len(X), kernel)
    return _product_mass(m, kernel.edge_probabilities(X), kernel)


def diameter_kernel_probability(omega, w: float, kernel: EdgeKernel, n: int | None = None) -> float:
    """Pi(omega | W) where every support edge opens with probability p(w)."""
    if n is None:
        n = omega.n if isinstance(omega, EdgeConfig) else len(omega)
    m = _support_states(omega, n, kernel)
    src, _ = kernel.support(n)
    return _product_mass(m, np.full(len(src), kernel.confidence(w)), kernel)


def enumerate_states(m: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Boolean rows for configuration indices [start, stop) over m free edges (bit k = edge k)."""
    stop = (1 << m) if stop is None else stop
    k = np.arange(start, stop, dtype=np.int64)
    return ((k[:, None] >> np.arange(m, dtype=np.int64)) & 1).astype(bool)


def product_masses(states: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Product-measure mass of each row of ``states`` under per-edge open probabilities."""
    return np.prod(np.where(states, probs, 1.0 - probs), axis=1)
