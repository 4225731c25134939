"""Exact Ising and Gaussian graphical model distributions.

Ising marginals are computed per connected component by brute-force
summation and multiplied across components, so graphs made of many small
components (every ensemble here) stay tractable.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .graphs import Graph, observed_nodes

MAX_COMPONENT_SIZE = 20
MAX_OBSERVED = 20
PD_EIGEN_FLOOR = 1e-9


class ComponentTooLarge(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


class _Missing(enum.Enum):
    MISSING = "★"

    def __repr__(self):
        return "MISSING"


MISSING = _Missing.MISSING


@dataclass(frozen=True)
class IsingParams:
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"inverse temperature must be positive and finite, got {self.lam}")


class Construction(str, enum.Enum):
    EDGE = "EdgeForm"
    CLIQUE = "CliqueForm"


@dataclass(frozen=True)
class GaussianParams:
    tau: float
    construction: Construction = Construction.EDGE

    def __post_init__(self):
        object.__setattr__(self, "construction", Construction(self.construction))
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")

    @property
    def a(self) -> float:
        return self.tau / (1 - self.tau)


ModelParams = Union[IsingParams, GaussianParams]


@functools.lru_cache(maxsize=32)
def spin_patterns(k: int) -> np.ndarray:
    """All 2^k sign patterns, first coordinate most significant, -1 before +1."""
    bits = (np.arange(2**k)[:, None] >> np.arange(k - 1, -1, -1)) & 1
    out = (2 * bits - 1).astype(np.int8).reshape(2**k, k)
    out.setflags(write=False)
    return out


def pattern_index(x: Sequence[int]) -> int:
    idx = 0
    for v in x:
        idx = 2 * idx + (1 if v > 0 else 0)
    return idx


@dataclass(frozen=True, eq=False)
class DistributionTable:
    """Probabilities of the 2^k sign patterns in ``spin_patterns(k)`` order."""

    k: int
    probs: np.ndarray
    log_partition: float

    @property
    def patterns(self) -> np.ndarray:
        return spin_patterns(self.k)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


@functools.lru_cache(maxsize=65536)
def _component_marginal(k: int, edges: tuple[tuple[int, int], ...], keep: tuple[int, ...], lam: float):
    """Exact log-marginal of one component on local nodes ``keep`` and the
    component's log partition function.  Local nodes are ``0..k-1``."""
    if k > MAX_COMPONENT_SIZE:
        raise ComponentTooLarge(f"component with {k} nodes exceeds {MAX_COMPONENT_SIZE}")
    x = spin_patterns(k).astype(float)
    energy = np.zeros(len(x))
    for i, j in edges:
        energy += x[:, i] * x[:, j]
    logw = lam * energy
    log_z = float(logsumexp(logw))
    logp = logw - log_z
    if len(keep) == k:
        marg = logp
    else:
        # sum out hidden spins; axis order of the reshaped table is node order
        shape = (2,) * k
        hidden = tuple(i for i in range(k) if i not in keep)
        marg = logsumexp(logp.reshape(shape), axis=hidden).reshape(-1)
    marg = marg.copy()
    marg.setflags(write=False)
    return marg, log_z


def _local_components(g: Graph, lam: float):
    """Yield (global nodes, local edges) per component."""
    for comp in g.components():
        index = {v: i for i, v in enumerate(comp)}
        edges = tuple((index[i], index[j]) for i, j in g.edges if i in index)
        yield comp, edges


def ising_log_partition(g: Graph, params: IsingParams) -> float:
    total = 0.0
    for comp, edges in _local_components(g, params.lam):
        total += _component_marginal(len(comp), edges, tuple(range(len(comp))), params.lam)[1]
    return total


def _observed_factors(g: Graph, lam: float, obs: tuple[int, ...]):
    """Per component touching the observed set: (observed global nodes, log-marginal)."""
    obs_set = set(obs)
    log_z = 0.0
    factors = []
    for comp, edges in _local_components(g, lam):
        kept_local = tuple(i for i, v in enumerate(comp) if v in obs_set)
        if not kept_local:
            log_z += _component_marginal(len(comp), edges, tuple(range(len(comp))), lam)[1]
            continue
        marg, lz = _component_marginal(len(comp), edges, kept_local, lam)
        log_z += lz
        factors.append((tuple(comp[i] for i in kept_local), marg))
    return factors, log_z


@functools.lru_cache(maxsize=16384)
def _ising_table_cached(g: Graph, lam: float, obs: tuple[int, ...]) -> DistributionTable:
    if len(obs) > MAX_OBSERVED:
        raise ComponentTooLarge(f"{len(obs)} observed nodes exceed {MAX_OBSERVED}")
    factors, log_z = _observed_factors(g, lam, obs)
    # outer product in factor order, then permute axes to ascending node order
    logp = np.zeros(())
    order: list[int] = []
    for nodes, marg in factors:
        logp = np.add.outer(logp, marg.reshape((2,) * len(nodes)))
        order.extend(nodes)
    if order:
        perm = np.argsort(order)
        logp = np.transpose(logp, perm)
    probs = np.exp(np.asarray(logp).reshape(-1))
    probs /= probs.sum()
    probs.setflags(write=False)
    return DistributionTable(len(obs), probs, log_z)


def ising_table(g: Graph, params: IsingParams, z: Sequence[int] | None = None) -> DistributionTable:
    """Exact marginal of the observed coordinates (``z == 1``) under P_G."""
    if z is None:
        z = (1,) * g.p
    if len(z) != g.p:
        raise ValueError(f"mask length {len(z)} does not match p={g.p}")
    return _ising_table_cached(g, float(params.lam), observed_nodes(z))


def ising_table_bruteforce(g: Graph, params: IsingParams, z: Sequence[int] | None = None) -> DistributionTable:
    """Reference implementation: full 2^p enumeration then marginalization."""
    if z is None:
        z = (1,) * g.p
    x = spin_patterns(g.p).astype(float)
    energy = np.zeros(len(x))
    for i, j in g.edges:
        energy += x[:, i] * x[:, j]
    logw = params.lam * energy
    log_z = float(logsumexp(logw))
    p = np.exp(logw - log_z)
    obs = observed_nodes(z)
    idx = np.zeros(len(x), dtype=int)
    for v in obs:
        idx = 2 * idx + (x[:, v] > 0)
    probs = np.bincount(idx, weights=p, minlength=2 ** len(obs))
    return DistributionTable(len(obs), probs / probs.sum(), log_z)


def ising_log_likelihood(g: Graph, params: IsingParams, obs: tuple[int, ...], values: Sequence[int]) -> float:
    """log P_{G(z)}(x) for a single observation, via component factors."""
    factors, _ = _observed_factors(g, float(params.lam), obs)
    pos = {v: k for k, v in enumerate(obs)}
    total = 0.0
    for nodes, marg in factors:
        total += float(marg[pattern_index([values[pos[v]] for v in nodes])])
    # observed nodes outside every factor cannot occur: isolated nodes form
    # their own one-node components
    return total


# ---------------------------------------------------------------------------
# Gaussian


def _check_pd(mat: np.ndarray, what: str) -> None:
    if mat.size and np.linalg.eigvalsh(mat).min() <= PD_EIGEN_FLOOR:
        raise NotPositiveDefinite(f"{what} is not positive definite")


def gaussian_precision(g: Graph, params: GaussianParams) -> np.ndarray:
    """Precision matrix of the fixed-sign constructions.

    EdgeForm: unit diagonal, ``-tau`` on edges.  CliqueForm: per-clique
    blocks with ``1 + a`` on the diagonal and ``a`` off it, ``a = tau/(1-tau)``;
    isolated nodes keep a unit diagonal.
    """
    p = g.p
    theta = np.eye(p)
    if params.construction is Construction.EDGE:
        for i, j in g.edges:
            theta[i, j] = theta[j, i] = -params.tau
    else:
        if not g.is_clique_union():
            raise ValueError("CliqueForm needs a disjoint union of cliques")
        a = params.a
        for comp in g.components():
            if len(comp) < 2:
                continue
            idx = np.array(comp)
            theta[np.ix_(idx, idx)] = a
            theta[idx, idx] = 1 + a
    _check_pd(theta, "precision matrix")
    return theta


def covariance_from_precision(theta: np.ndarray, max_cond: float = 1e12) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError("precision matrix must be square")
    if theta.size == 0:
        return theta.copy()
    _check_pd(theta, "precision matrix")
    if np.linalg.cond(theta) > max_cond:
        raise NotPositiveDefinite("precision matrix is ill-conditioned")
    cov = np.linalg.inv(theta)
    return 0.5 * (cov + cov.T)


def clique_covariance_closed_form(m: int, a: float) -> np.ndarray:
    """Inverse of the m-clique CliqueForm block."""
    c = np.full((m, m), -a)
    np.fill_diagonal(c, 1 + (m - 1) * a)
    return c / (1 + m * a)


def marginal_covariance(cov: np.ndarray, z: Sequence[int]) -> np.ndarray:
    cov = np.asarray(cov)
    if len(z) != cov.shape[0]:
        raise ValueError(f"mask length {len(z)} does not match dimension {cov.shape[0]}")
    idx = observed_nodes(z)
    if not idx:
        raise ValueError("empty selection")
    return cov[np.ix_(idx, idx)]


@functools.lru_cache(maxsize=4096)
def gaussian_covariance(g: Graph, params: GaussianParams) -> np.ndarray:
    cov = covariance_from_precision(gaussian_precision(g, params))
    cov.setflags(write=False)
    return cov


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class IsingModel:
    graph: Graph
    params: IsingParams

    @property
    def p(self) -> int:
        return self.graph.p


@dataclass(frozen=True, eq=False)
class GaussianModel:
    cov: np.ndarray

    @property
    def p(self) -> int:
        return self.cov.shape[0]

    @classmethod
    def from_graph(cls, g: Graph, params: GaussianParams) -> "GaussianModel":
        return cls(gaussian_covariance(g, params))


def make_model(g: Graph, params: ModelParams):
    if isinstance(params, IsingParams):
        return IsingModel(g, params)
    return GaussianModel.from_graph(g, params)


@dataclass(frozen=True)
class Observation:
    """One round's response: a value per node, MISSING where unobserved."""

    values: tuple

    @property
    def p(self) -> int:
        return len(self.values)

    def observed_values(self) -> tuple:
        return tuple(v for v in self.values if v is not MISSING)

    def to_json(self) -> list:
        return [None if v is MISSING else v for v in self.values]

    @classmethod
    def from_json(cls, values: list) -> "Observation":
        return cls(tuple(MISSING if v is None else v for v in values))


@functools.lru_cache(maxsize=16384)
def _cholesky_marginal(cov_key: bytes, k: int, obs: tuple[int, ...]) -> np.ndarray:
    cov = np.frombuffer(cov_key).reshape(k, k)
    return np.linalg.cholesky(cov[np.ix_(obs, obs)])


def draw_observation(model, z: Sequence[int], rng: np.random.Generator) -> Observation:
    """Fresh draw of the observed coordinates from the exact marginal."""
    p = model.p
    if len(z) != p:
        raise ValueError(f"mask length {len(z)} does not match p={p}")
    obs = observed_nodes(z)
    values: list = [MISSING] * p
    if not obs:
        return Observation(tuple(values))
    if isinstance(model, IsingModel):
        table = ising_table(model.graph, model.params, z)
        cdf = np.cumsum(table.probs)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        pattern = spin_patterns(len(obs))[min(idx, len(cdf) - 1)]
        for v, s in zip(obs, pattern):
            values[v] = int(s)
    else:
        chol = _cholesky_marginal(np.ascontiguousarray(model.cov).tobytes(), p, obs)
        draw = chol @ rng.standard_normal(len(obs))
        for v, s in zip(obs, draw):
            values[v] = float(s)
    return Observation(tuple(values))
