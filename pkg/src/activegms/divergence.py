"""Exact KL divergences and the divergence bounds behind the lower bounds.

All values are in nats.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .graphs import EnsembleKind, EnsembleSpec, Graph, clique_union, empty_graph
from .models import DistributionTable, IsingParams, ising_table

# probabilities below this are treated as zero mass when checking support
TINY = 1e-300


class AbsoluteContinuityError(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceBound:
    exact: float
    paper_bound: float
    bound_valid: bool = True


def kl_discrete(p, q) -> float:
    """Sum of P log(P/Q) over a shared finite support."""
    p = np.asarray(p.probs if isinstance(p, DistributionTable) else p, dtype=float)
    q = np.asarray(q.probs if isinstance(q, DistributionTable) else q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] < TINY):
        raise AbsoluteContinuityError("Q vanishes where P has mass")
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def kl_gaussian(sigma1, sigma0) -> float:
    """D(N(0, sigma1) || N(0, sigma0))."""
    s1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    s0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
    if s1.shape != s0.shape or s1.shape[0] != s1.shape[1]:
        raise ValueError(f"dimension mismatch: {s1.shape} vs {s0.shape}")
    k = s1.shape[0]
    try:
        c1 = np.linalg.cholesky(s1)
        c0 = np.linalg.cholesky(s0)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    logdet1 = 2 * np.log(np.diag(c1)).sum()
    logdet0 = 2 * np.log(np.diag(c0)).sum()
    # Tr(S0^{-1} S1) = ||C0^{-1} C1||_F^2
    w = np.linalg.solve(c0, c1)
    trace = float(np.sum(w * w))
    return 0.5 * (trace - k + logdet0 - logdet1)


def edge_divergence_ising(lam: float) -> DivergenceBound:
    """Single-edge Ising model vs the empty graph on two nodes.

    The exact value comes from the 4-outcome tables; the bound is
    ``lam * tanh(lam)``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return DivergenceBound(0.0, 0.0)
    edge = Graph(2, ((0, 1),))
    params = IsingParams(lam)
    exact = kl_discrete(ising_table(edge, params), ising_table(empty_graph(2), params))
    return DivergenceBound(max(exact, 0.0), lam * math.tanh(lam))


def edge_divergence_ising_closed_form(lam: float) -> float:
    return lam * math.tanh(lam) - math.log(math.cosh(lam))


def f_beta(beta: float) -> float:
    """(-log(1 - beta) - beta) / beta, with f(0) = 0."""
    if beta >= 1:
        raise ValueError("beta must be < 1")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta < 1e-4:
        # series: beta/2 + beta^2/3 + beta^3/4 + ...
        return beta / 2 + beta**2 / 3 + beta**3 / 4 + beta**4 / 5
    return (-math.log1p(-beta) - beta) / beta


def _h(beta: float) -> float:
    """beta * f(beta) = -log(1 - beta) - beta."""
    if beta == 0:
        return 0.0
    return -math.log1p(-beta) - beta


def clique_partial_divergence(m: int, m_tilde: int, a: float) -> float:
    """Divergence from N(0, I) of ``m_tilde`` jointly observed nodes of one
    CliqueForm ``m``-clique with coupling ``a``."""
    if not 0 <= m_tilde <= m:
        raise ValueError(f"need 0 <= m_tilde <= m, got m_tilde={m_tilde}, m={m}")
    if a <= 0:
        raise ValueError("a must be positive")
    return 0.5 * _h(m_tilde * a / (1 + m * a))


# ---------------------------------------------------------------------------
# worst-case partial observation


def _allocation_value(alloc: Sequence[int], sizes: Sequence[int], a: float) -> float:
    """Half-sum of h(beta_j) over cliques; summed in a canonical order so
    equal allocations give bit-identical floats."""
    terms = sorted((_h(t * a / (1 + m * a)) for t, m in zip(alloc, sizes)), reverse=True)
    return 0.5 * math.fsum(terms)


def greedy_allocation(sizes: Sequence[int], n: int) -> tuple[int, ...]:
    """Fill the largest cliques first; the remainder goes into the next one."""
    order = sorted(range(len(sizes)), key=lambda j: (-sizes[j], j))
    alloc = [0] * len(sizes)
    left = min(n, sum(sizes))
    for j in order:
        take = min(sizes[j], left)
        alloc[j] = take
        left -= take
        if left == 0:
            break
    return tuple(alloc)


def iter_allocations(sizes: Sequence[int], n: int) -> Iterator[tuple[int, ...]]:
    """Every integer vector 0 <= t_j <= sizes[j] with sum n."""
    if not sizes:
        if n == 0:
            yield ()
        return
    rest_cap = sum(sizes[1:])
    for t in range(max(0, n - rest_cap), min(sizes[0], n) + 1):
        for tail in iter_allocations(sizes[1:], n - t):
            yield (t, *tail)


def count_allocations(sizes: Sequence[int], n: int) -> int:
    ways = [1] + [0] * n
    for s in sizes:
        new = [0] * (n + 1)
        for total in range(n + 1):
            if ways[total]:
                for t in range(0, min(s, n - total) + 1):
                    new[total + t] += ways[total]
        ways = new
    return ways[n]


def exhaustive_max_allocation(sizes: Sequence[int], n: int, a: float) -> tuple[float, tuple[int, ...]]:
    best, best_alloc = -1.0, ()
    for alloc in iter_allocations(tuple(sizes), n):
        val = _allocation_value(alloc, sizes, a)
        if val > best:
            best, best_alloc = val, alloc
    return best, best_alloc


def dp_max_allocation(sizes: Sequence[int], n: int, a: float) -> tuple[float, tuple[int, ...]]:
    """Exact maximum over allocations by dynamic programming over cliques."""
    neg = -math.inf
    best = [0.0] + [neg] * n
    choice: list[list[int]] = []
    for m in sizes:
        new = [neg] * (n + 1)
        pick = [0] * (n + 1)
        for total in range(n + 1):
            if best[total] == neg:
                continue
            for t in range(0, min(m, n - total) + 1):
                v = best[total] + _h(t * a / (1 + m * a))
                if v > new[total + t]:
                    new[total + t] = v
                    pick[total + t] = t
        best = new
        choice.append(pick)
    alloc = [0] * len(sizes)
    total = n
    for j in range(len(sizes) - 1, -1, -1):
        alloc[j] = choice[j][total]
        total -= alloc[j]
    alloc = tuple(alloc)
    return _allocation_value(alloc, sizes, a), alloc


def relaxed_max(sizes: Sequence[int], n: int, a: float, m_min: int | None = None) -> float:
    """Maximum under the relaxed budget sum_j beta_j (1 + m_min a) <= n a with
    continuous beta_j in [0, m_j a / (1 + m_j a)].  Largest caps fill first."""
    if m_min is None:
        m_min = min(sizes)
    budget = n * a / (1 + m_min * a)
    caps = sorted((m * a / (1 + m * a) for m in sizes), reverse=True)
    total = 0.0
    for cap in caps:
        take = min(cap, budget)
        total += _h(take)
        budget -= take
        if budget <= 0:
            break
    return 0.5 * total


@dataclass(frozen=True)
class WorstCaseDivergence:
    exact_max: float
    paper_bound: float
    allocation: tuple[int, ...]
    greedy_value: float
    relaxed_max: float | None = None
    extra: dict = field(default_factory=dict)


def _partial_closed_bound(n: int, m_min: int, m_max: int, a: float) -> float:
    return n / (4 * m_min) * math.log1p((m_max * a) ** 2)


def worst_case_partial_divergence(spec: EnsembleSpec, a: float, n_z: int) -> WorstCaseDivergence:
    """Largest divergence from N(0, I) over all ``n_z``-node queries and all
    graphs of a (uniform or variable) disjoint-clique family.

    For uniform cliques the greedy allocation is optimal; for variable
    sizes the exact maximum comes from a DP and the greedy and relaxed
    values are reported alongside.
    """
    if spec.kind not in (EnsembleKind.DISJOINT_CLIQUES, EnsembleKind.VARIABLE_CLIQUES, EnsembleKind.ISOLATED_EDGES):
        raise ValueError(f"{spec.kind.value} is not a disjoint-clique family")
    if not 0 <= n_z <= spec.p:
        raise ValueError(f"n_z must lie in [0, {spec.p}]")
    if a <= 0:
        raise ValueError("a must be positive")
    sizes = spec.clique_sizes
    if n_z == 0:
        return WorstCaseDivergence(0.0, 0.0, (0,) * len(sizes), 0.0, 0.0 if spec.kind is EnsembleKind.VARIABLE_CLIQUES else None)
    # nodes beyond the cliques are isolated and contribute nothing
    n_eff = min(n_z, sum(sizes))
    greedy = greedy_allocation(sizes, n_eff)
    greedy_value = _allocation_value(greedy, sizes, a)
    bound = _partial_closed_bound(n_z, min(sizes), max(sizes), a)
    if len(set(sizes)) == 1:
        return WorstCaseDivergence(greedy_value, bound, greedy, greedy_value)
    exact, alloc = dp_max_allocation(sizes, n_eff, a)
    return WorstCaseDivergence(exact, bound, alloc, greedy_value, relaxed_max(sizes, n_eff, a))


# ---------------------------------------------------------------------------
# clique-minus-one


def clique_minus_one_closed_bound(d: int, lam: float) -> float:
    return 4 * lam * d * math.exp(lam) / math.exp(lam * d)


@functools.lru_cache(maxsize=1024)
def clique_minus_one_exact(d: int, lam: float) -> float:
    """D(P_{K_{d+1} minus one edge} || P_{K_{d+1}}) by enumerating 2^{d+1} spins.

    With q the probability that the removed edge's endpoints disagree under
    the edge-removed model, the divergence is
    ``log1p(-q (1 - e^{-2 lam})) + 2 lam q``; this avoids the cancellation a
    direct sum of P log(P/Q) suffers once the divergence drops below 1e-16.
    """
    if lam == 0:
        return 0.0
    m = d + 1
    removed = clique_union([range(m)], m)
    removed = Graph(m, tuple(e for e in removed.edges if e != (0, 1)))
    table = ising_table(removed, IsingParams(lam))
    pats = table.patterns
    q = float(table.probs[pats[:, 0] != pats[:, 1]].sum())
    return math.log1p(-q * -math.expm1(-2 * lam)) + 2 * lam * q


def clique_minus_one_divergence(g_removed: Graph, g_base: Graph, lam: float) -> DivergenceBound:
    """Exact divergence between an edge-removed clique union and its base
    graph, with the ``4 lam d e^lam / e^{lam d}`` bound (valid for lam d >= 1)."""
    if g_removed.p != g_base.p:
        raise ValueError("graphs have different node counts")
    missing = set(g_base.edges) - set(g_removed.edges)
    if len(missing) != 1 or not set(g_removed.edges) <= set(g_base.edges):
        raise ValueError("g_removed must equal g_base minus exactly one edge")
    if not g_base.is_clique_union():
        raise ValueError("g_base must be a disjoint union of cliques")
    (i, _), = missing
    comp = next(c for c in g_base.components() if i in c)
    d = len(comp) - 1
    bound = clique_minus_one_closed_bound(d, lam)
    if lam == 0:
        return DivergenceBound(0.0, bound, lam * d >= 1)
    return DivergenceBound(clique_minus_one_exact(d, float(lam)), bound, lam * d >= 1)


def partial_divergence_ising(g: Graph, g_ref: Graph, lam: float, z: Sequence[int]) -> float:
    """D(P_{G(z)} || P_{G'(z)}) from exact marginal tables."""
    params = IsingParams(lam)
    return kl_discrete(ising_table(g, params, z), ising_table(g_ref, params, z))


def weakening_gap(beta: float) -> float:
    """0.5 log(1 + beta^2) minus (-log(1 - beta/(1+beta)) - beta/(1+beta)); never negative."""
    return 0.5 * math.log1p(beta**2) - (math.log1p(beta) - beta / (1 + beta))
