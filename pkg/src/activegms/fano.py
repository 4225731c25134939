"""Fano-type error floors, exact mutual information, and sample-complexity
lower-bound evaluators.

The asymptotic ``(1 - delta - o(1))`` factors of the headline bounds are
replaced throughout by the exact finite-size factor
``1 - delta - log 2 / log|T|``, where ``|T|`` is the true size of the ensemble
that generates each term.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .divergence import clique_minus_one_closed_bound, kl_discrete
from .graphs import (
    EnsembleKind,
    EnsembleSpec,
    clique_union,
    degree_stats,
    enumerate_ensemble,
    log_cardinality,
    top_alpha_count,
    _blocks,
)
from .models import IsingParams, ModelParams, ising_table

LOG2 = math.log(2)
MAX_MI_FAMILY = 10**4
MAX_MI_OBSERVED = 16


@dataclass(frozen=True)
class FanoCertificate:
    log_family_size: float
    mi_budget: float
    implied_error_floor: float


def fano_error_floor(log_T: float, mi_budget: float) -> FanoCertificate:
    """Smallest average error compatible with ``mi_budget`` nats of
    information about a uniform draw from ``exp(log_T)`` hypotheses."""
    if log_T <= 0:
        raise ValueError("log family size must be positive")
    if mi_budget < 0:
        raise ValueError("mutual information budget must be non-negative")
    floor = max(0.0, 1.0 - (mi_budget + LOG2) / log_T)
    return FanoCertificate(log_T, mi_budget, min(floor, 1.0))


def remainder_factor(delta: float, log_T: float) -> float:
    """1 - delta - log 2 / log|T|, clamped to [0, 1]."""
    if log_T <= 0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - delta - LOG2 / log_T))


# ---------------------------------------------------------------------------
# exact mutual information (Ising only)


def _family_tables(spec: EnsembleSpec, params: IsingParams, z: Sequence[int]) -> np.ndarray:
    family = enumerate_ensemble(spec, ceiling=MAX_MI_FAMILY)
    return np.stack([ising_table(g, params, z).probs for g in family])


def _check_mi_inputs(spec: EnsembleSpec, params: ModelParams, z: Sequence[int]) -> None:
    if not isinstance(params, IsingParams):
        raise TypeError("exact mutual information is only available for Ising models")
    if len(z) != spec.p:
        raise ValueError(f"mask length {len(z)} does not match p={spec.p}")
    if sum(1 for v in z if v) > MAX_MI_OBSERVED:
        raise ValueError(f"at most {MAX_MI_OBSERVED} observed nodes supported")


def exact_conditional_mi(spec: EnsembleSpec, params: ModelParams, z: Sequence[int]) -> float:
    """I(G; X | Z = z) in nats for G uniform on the family."""
    _check_mi_inputs(spec, params, z)
    if not any(z):
        return 0.0
    tables = _family_tables(spec, params, z)
    mixture = tables.mean(axis=0)
    mi = float(np.mean([kl_discrete(t, mixture) for t in tables]))
    return max(mi, 0.0)


def channel_capacity(spec: EnsembleSpec, params: ModelParams, z: Sequence[int], tol: float = 1e-12, max_iter: int = 10000) -> float:
    """max over priors on the family of I(G; X | Z = z), by Blahut-Arimoto.

    Under an adaptive strategy the posterior of G given the query is not
    uniform, so this (not the uniform-prior MI) bounds each round.
    """
    _check_mi_inputs(spec, params, z)
    if not any(z):
        return 0.0
    w = _family_tables(spec, params, z)
    w = np.unique(np.round(w, 15), axis=0)
    prior = np.full(len(w), 1.0 / len(w))
    logw = np.log(np.maximum(w, 1e-300))
    for _ in range(max_iter):
        out = prior @ w
        d = np.sum(w * (logw - np.log(out)), axis=1)
        upper, lower = float(d.max()), float(prior @ d)
        if upper - lower < tol:
            break
        prior = prior * np.exp(d - d.max())
        prior /= prior.sum()
    return max(upper, 0.0)


def per_node_capacity(spec: EnsembleSpec, params: ModelParams) -> float:
    """max over non-empty masks z of capacity(z) / n(z)."""

    best = 0.0
    for z in itertools.product((0, 1), repeat=spec.p):
        k = sum(z)
        if 0 < k <= MAX_MI_OBSERVED:
            best = max(best, channel_capacity(spec, params, z) / k)
    return best


# ---------------------------------------------------------------------------
# closed-form information budgets


def _ising_edge_bound(lam: float) -> float:
    return lam * math.tanh(lam)


def gaussian_edge_divergence(tau: float) -> float:
    return 0.5 * math.log(1 / (1 - tau**2))


def alpha_reduced_sizes(sizes: Sequence[int], alpha: float) -> tuple[int, ...]:
    """Largest cliques (descending) covering the ceil(alpha p) top-degree nodes."""
    ordered = sorted(sizes, reverse=True)
    need = top_alpha_count(sum(sizes), alpha)
    kept, total = [], 0
    for s in ordered:
        if total >= need:
            break
        kept.append(s)
        total += s
    return tuple(kept)


def mi_budget(spec: EnsembleSpec, params: ModelParams, n: float, alpha: float = 1.0) -> float:
    """Closed-form upper bound on the summed per-round information of any
    strategy with ``n`` node observations."""
    if n < 0:
        raise ValueError("budget must be non-negative")
    k = spec.kind
    ising = isinstance(params, IsingParams)
    if k is EnsembleKind.ISOLATED_EDGES:
        per_edge = _ising_edge_bound(params.lam) if ising else gaussian_edge_divergence(params.tau)
        return n / 2 * per_edge
    if k in (EnsembleKind.CLIQUE_MINUS_ONE, EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE):
        if not ising:
            raise TypeError(f"{k.value} budget is defined for Ising models")
        d = spec.max_degree
        if params.lam * d < 1:
            raise ValueError("clique-minus-one budget requires lambda * d >= 1")
        return n / 2 * clique_minus_one_closed_bound(d, params.lam)
    if k is EnsembleKind.COMPLETE_DEGREE_BOUNDED:
        if not ising:
            raise TypeError("the n log 2 budget applies to binary observations")
        return n * LOG2
    if ising:
        raise TypeError(f"{k.value} budget is defined for Gaussian models")
    a = params.a
    if k is EnsembleKind.DISJOINT_CLIQUES:
        m = spec.m
        return n / (4 * m) * math.log1p((m * a) ** 2)
    reduced = alpha_reduced_sizes(spec.sizes, alpha)
    m_min, m_max = min(reduced), max(reduced)
    return n / (4 * m_min) * math.log1p((m_max * a) ** 2)


# ---------------------------------------------------------------------------
# theorem evaluators


@dataclass(frozen=True)
class BoundTerm:
    name: str
    prefactor: float
    remainder_factor: float
    log_cardinality: float
    applicable: bool = True

    @property
    def value(self) -> float:
        if not self.applicable:
            return 0.0
        return max(0.0, self.prefactor) * self.remainder_factor

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "prefactor": self.prefactor,
            "remainder_factor": self.remainder_factor,
            "value": self.value,
        }


@dataclass(frozen=True)
class BoundReport:
    terms: tuple[BoundTerm, ...]
    params: dict
    warnings: tuple[str, ...] = ()

    @property
    def n_lower(self) -> float:
        return max((t.value for t in self.terms), default=0.0)

    @property
    def headline(self) -> float:
        """max prefactor times (1 - delta), the form with the o(1) dropped."""
        delta = self.params.get("delta", 0.0)
        vals = [max(0.0, t.prefactor) * (1 - delta) for t in self.terms if t.applicable]
        return max(vals, default=0.0)

    def term(self, name: str) -> BoundTerm:
        return next(t for t in self.terms if t.name == name)

    def to_json(self) -> dict:
        return {
            "params": self.params,
            "terms": [t.to_json() for t in self.terms],
            "n_lower": self.n_lower,
            "headline": self.headline,
            "warnings": list(self.warnings),
        }


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def theorem_ising_bound(p: int, d: int, lam: float, delta: float) -> BoundReport:
    """Three-term Ising lower bound on the number of node observations."""
    if p < 2 or not 1 <= d < p:
        raise ValueError("need p >= 2 and 1 <= d < p")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    _check_delta(delta)
    warnings = []

    log_t1 = log_cardinality(EnsembleSpec(EnsembleKind.ISOLATED_EDGES, p)).best
    t1 = BoundTerm(
        "isolated_edges",
        2 * p * math.log(p) / (lam * math.tanh(lam)),
        remainder_factor(delta, log_t1),
        log_t1,
    )

    applicable = lam * d >= 1
    if not applicable:
        warnings.append("lambda * d < 1: clique-minus-one term not applicable")
    log_t2 = log_cardinality(EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, p, m=d + 1)).best if d + 1 <= p else 0.0
    t2 = BoundTerm(
        "clique_minus_one",
        math.exp(lam * d) * math.log(p * d) / (2 * lam * d * math.exp(lam)),
        remainder_factor(delta, log_t2),
        log_t2,
        applicable,
    )

    card3 = log_cardinality(EnsembleSpec(EnsembleKind.COMPLETE_DEGREE_BOUNDED, p, d=d))
    if card3.log_exact is None:
        warnings.append("degree-bounded family size not enumerable; remainder uses a certified lower bound")
    t3 = BoundTerm(
        "complete_degree_bounded",
        p * d * math.log(p / (8 * d)) / (4 * LOG2),
        remainder_factor(delta, card3.best),
        card3.best,
    )
    return BoundReport((t1, t2, t3), {"model": "ising", "p": p, "d": d, "lambda": lam, "delta": delta}, tuple(warnings))


def theorem_gaussian_bound(p: int, d: int, tau: float, delta: float) -> BoundReport:
    """Two-term Gaussian lower bound on the number of node observations."""
    if p < 2 or not 1 <= d < p:
        raise ValueError("need p >= 2 and 1 <= d < p")
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    _check_delta(delta)
    warnings = []
    if d / p > 0.1:
        warnings.append(f"d/p = {d / p:.3g} > 0.1; the bound assumes d small relative to p")

    log_t1 = log_cardinality(EnsembleSpec(EnsembleKind.ISOLATED_EDGES, p)).best
    t1 = BoundTerm(
        "isolated_edges",
        4 * p * math.log(p) / math.log(1 / (1 - tau**2)),
        remainder_factor(delta, log_t1),
        log_t1,
    )
    log_t2 = log_cardinality(EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, p, m=d + 1)).best
    a = tau / (1 - tau)
    t2 = BoundTerm(
        "disjoint_cliques",
        2 * p * d * math.log(p / d) / math.log1p(((d + 1) * a) ** 2),
        remainder_factor(delta, log_t2),
        log_t2,
    )
    return BoundReport((t1, t2), {"model": "gaussian", "p": p, "d": d, "tau": tau, "delta": delta}, tuple(warnings))


def ensemble2a_bound(sizes: Sequence[int], lam: float, delta: float) -> BoundReport:
    """Variable-size edge-removed cliques: the genie reveals every removed
    edge except in the largest clique, so only d_max matters."""
    sizes = tuple(int(s) for s in sizes)
    if not sizes or min(sizes) < 2:
        raise ValueError("clique sizes must be >= 2")
    _check_delta(delta)
    d_max = max(sizes) - 1
    if lam * d_max < 1:
        raise ValueError("requires lambda * d_max >= 1")
    log_t = math.log(d_max + 1)
    factor = 1 - delta - LOG2 / log_t
    warnings = []
    if factor <= 0:
        warnings.append("remainder factor non-positive for this d_max and delta; clamped to 0")
    term = BoundTerm(
        "variable_clique_minus_one",
        math.exp(lam * d_max) * math.log(d_max * (d_max + 1)) / (2 * lam * d_max * math.exp(lam)),
        min(1.0, max(0.0, factor)),
        log_t,
    )
    params = {"model": "ising", "sizes": list(sizes), "p": sum(sizes), "lambda": lam, "delta": delta, "d_max": d_max}
    return BoundReport((term,), params, tuple(warnings))


def ensemble4a_bound(sizes: Sequence[int], tau: float, alpha: float, delta: float) -> BoundReport:
    """Variable-size disjoint cliques with the alpha-genie reduction."""
    sizes = tuple(int(s) for s in sizes)
    if not sizes or min(sizes) < 2:
        raise ValueError("clique sizes must be >= 2")
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    _check_delta(delta)
    p = sum(sizes)
    warnings = []
    if max(sizes) / p > 0.1:
        warnings.append("largest clique exceeds 0.1 p; the bound assumes clique sizes small relative to p")
    g = clique_union(_blocks(sizes), p)
    d_min_alpha = degree_stats(g, alpha).d_min_alpha
    d_max = max(sizes) - 1
    reduced = alpha_reduced_sizes(sizes, alpha)
    log_t = log_cardinality(EnsembleSpec(EnsembleKind.VARIABLE_CLIQUES, sum(reduced), sizes=reduced)).best
    a = tau / (1 - tau)
    term = BoundTerm(
        "variable_cliques_alpha_genie",
        2 * alpha * p * d_min_alpha * math.log(p / d_max) / math.log1p(((d_max + 1) * a) ** 2),
        remainder_factor(delta, log_t),
        log_t,
    )
    params = {
        "model": "gaussian",
        "sizes": list(sizes),
        "p": p,
        "tau": tau,
        "alpha": alpha,
        "delta": delta,
        "d_max": d_max,
        "d_min_alpha": d_min_alpha,
        "reduced_sizes": list(reduced),
    }
    return BoundReport((term,), params, tuple(warnings))
