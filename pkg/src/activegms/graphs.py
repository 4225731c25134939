"""Graphs, restricted graph ensembles, and their cardinalities.

Nodes are indexed ``0..p-1`` and every edge is stored as ``(i, j)`` with
``i < j``.  Ensembles are the small, hard-to-distinguish graph families used
for the minimax lower bounds: isolated edges, cliques with one edge removed,
all degree-bounded graphs, and disjoint cliques (uniform or variable size).
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln

DEFAULT_ENUMERATION_CEILING = 10**7


class EnsembleTooLarge(ValueError):
    """Raised when an enumeration would exceed the configured ceiling."""


@dataclass(frozen=True)
class Graph:
    p: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.p < 0:
            raise ValueError(f"node count must be non-negative, got {self.p}")
        canon = set()
        for e in self.edges:
            i, j = (int(e[0]), int(e[1]))
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise ValueError(f"edge {(i, j)} has an endpoint outside [0, {self.p})")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.p, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=int)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def components(self) -> list[tuple[int, ...]]:
        """Connected components as sorted node tuples, ordered by smallest node."""
        parent = list(range(self.p))

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        for i, j in self.edges:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        groups: dict[int, list[int]] = {}
        for v in range(self.p):
            groups.setdefault(find(v), []).append(v)
        return [tuple(g) for _, g in sorted(groups.items())]

    def is_clique_union(self) -> bool:
        edge_set = set(self.edges)
        for comp in self.components():
            for e in itertools.combinations(comp, 2):
                if e not in edge_set:
                    return False
        return True

    def to_json(self) -> dict:
        return {"p": self.p, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, obj: dict | str) -> "Graph":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(int(obj["p"]), tuple(tuple(e) for e in obj["edges"]))


def empty_graph(p: int) -> Graph:
    return Graph(p, ())


def clique_union(blocks: Iterable[Sequence[int]], p: int) -> Graph:
    """Graph on ``p`` nodes whose edges make each block a clique."""
    edges = []
    for block in blocks:
        edges.extend(itertools.combinations(sorted(block), 2))
    return Graph(p, tuple(edges))


class EnsembleKind(str, enum.Enum):
    ISOLATED_EDGES = "IsolatedEdges"
    CLIQUE_MINUS_ONE = "CliqueMinusOne"
    COMPLETE_DEGREE_BOUNDED = "CompleteDegreeBounded"
    DISJOINT_CLIQUES = "DisjointCliques"
    VARIABLE_CLIQUES_MINUS_ONE = "VariableCliquesMinusOne"
    VARIABLE_CLIQUES = "VariableCliques"


_VARIABLE_KINDS = (EnsembleKind.VARIABLE_CLIQUES, EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE)


@dataclass(frozen=True)
class EnsembleSpec:
    """A restricted graph family and its parameters.

    ``m`` is required for CliqueMinusOne and DisjointCliques, ``d`` for
    CompleteDegreeBounded, and ``sizes`` (summing to ``p``) for the two
    variable-clique kinds.
    """

    kind: EnsembleKind
    p: int
    m: int | None = None
    d: int | None = None
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EnsembleKind(self.kind))
        if self.sizes is not None:
            object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        self.validate()

    def validate(self) -> None:
        k, p = self.kind, self.p
        if p < 1:
            raise ValueError(f"p must be positive, got {p}")
        if k in (EnsembleKind.CLIQUE_MINUS_ONE, EnsembleKind.DISJOINT_CLIQUES):
            if self.m is None or self.m < 2:
                raise ValueError(f"{k.value} needs clique size m >= 2")
            if self.m > p:
                raise ValueError(f"clique size m={self.m} exceeds p={p}")
        elif k is EnsembleKind.COMPLETE_DEGREE_BOUNDED:
            if self.d is None or not 1 <= self.d < p:
                raise ValueError(f"{k.value} needs 1 <= d < p, got d={self.d}")
        elif k in _VARIABLE_KINDS:
            if not self.sizes:
                raise ValueError(f"{k.value} needs a non-empty size list")
            if min(self.sizes) < 2:
                raise ValueError("clique sizes must be >= 2")
            if sum(self.sizes) != p:
                raise ValueError(f"sizes sum to {sum(self.sizes)}, expected p={p}")
        elif k is EnsembleKind.ISOLATED_EDGES:
            if p < 2:
                raise ValueError("IsolatedEdges needs p >= 2")

    @property
    def clique_sizes(self) -> tuple[int, ...]:
        """Sizes of the (base) cliques, leftover isolated nodes excluded."""
        k = self.kind
        if k is EnsembleKind.ISOLATED_EDGES:
            return (2,) * (self.p // 2)
        if k in (EnsembleKind.CLIQUE_MINUS_ONE, EnsembleKind.DISJOINT_CLIQUES):
            return (self.m,) * (self.p // self.m)
        if k in _VARIABLE_KINDS:
            return self.sizes
        raise ValueError(f"{k.value} is not a clique ensemble")

    @property
    def max_degree(self) -> int:
        if self.kind is EnsembleKind.COMPLETE_DEGREE_BOUNDED:
            return self.d
        return max(self.clique_sizes) - 1

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "p": self.p}
        for name in ("m", "d"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.sizes is not None:
            out["sizes"] = list(self.sizes)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EnsembleSpec":
        sizes = obj.get("sizes")
        return cls(
            EnsembleKind(obj["kind"]),
            int(obj["p"]),
            m=obj.get("m"),
            d=obj.get("d"),
            sizes=tuple(sizes) if sizes is not None else None,
        )


# ---------------------------------------------------------------------------
# cardinalities


def _log_set_partitions(sizes: Sequence[int]) -> float:
    """log of the number of ways to split sum(sizes) labeled nodes into
    unlabeled blocks with the given size multiset."""
    n = sum(sizes)
    out = gammaln(n + 1) - sum(gammaln(s + 1) for s in sizes)
    for _, group in itertools.groupby(sorted(sizes)):
        out -= gammaln(len(list(group)) + 1)
    return float(out)


def _set_partition_count(sizes: Sequence[int]) -> int:
    n = sum(sizes)
    out = math.factorial(n)
    for s in sizes:
        out //= math.factorial(s)
    for _, group in itertools.groupby(sorted(sizes)):
        out //= math.factorial(len(list(group)))
    return out


def _degree_bounded_count(p: int, d: int, ceiling: int | None = None) -> int:
    """Number of labeled graphs on p nodes with max degree <= d (backtracking)."""
    pairs = list(itertools.combinations(range(p), 2))
    deg = [0] * p
    count = 0

    def rec(idx):
        nonlocal count
        if idx == len(pairs):
            count += 1
            if ceiling is not None and count > ceiling:
                raise EnsembleTooLarge(f"more than {ceiling} graphs")
            return
        rec(idx + 1)
        i, j = pairs[idx]
        if deg[i] < d and deg[j] < d:
            deg[i] += 1
            deg[j] += 1
            rec(idx + 1)
            deg[i] -= 1
            deg[j] -= 1

    rec(0)
    return count


# CompleteDegreeBounded is counted by brute force only up to this many nodes.
MAX_P_DEGREE_BOUNDED_COUNT = 8


def _log_exact(spec: EnsembleSpec) -> float | None:
    k = spec.kind
    if k in (EnsembleKind.ISOLATED_EDGES, EnsembleKind.DISJOINT_CLIQUES, EnsembleKind.VARIABLE_CLIQUES):
        return _log_set_partitions(spec.clique_sizes)
    if k is EnsembleKind.CLIQUE_MINUS_ONE:
        return math.log(exact_count(spec))
    if k is EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE:
        return math.fsum(math.log(math.comb(s, 2)) for s in spec.sizes)
    count = exact_count(spec)
    return math.log(count) if count is not None else None


def exact_count(spec: EnsembleSpec) -> int | None:
    """Exact number of distinct labeled graphs in the family, or None when
    no closed form exists and brute-force counting is out of reach."""
    k = spec.kind
    if k is EnsembleKind.ISOLATED_EDGES:
        return _set_partition_count((2,) * (spec.p // 2))
    if k is EnsembleKind.CLIQUE_MINUS_ONE:
        return (spec.p // spec.m) * math.comb(spec.m, 2)
    if k is EnsembleKind.DISJOINT_CLIQUES:
        return _set_partition_count((spec.m,) * (spec.p // spec.m))
    if k is EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE:
        return math.prod(math.comb(s, 2) for s in spec.sizes)
    if k is EnsembleKind.VARIABLE_CLIQUES:
        return _set_partition_count(spec.sizes)
    if spec.p <= MAX_P_DEGREE_BOUNDED_COUNT:
        return _degree_bounded_count(spec.p, spec.d)
    return None


@dataclass(frozen=True)
class LogCardinality:
    """Natural-log family sizes.

    ``log_exact`` counts distinct labeled graphs (None if unknown).
    ``log_product_form`` is the product or lower-bound counting expression
    (ordered selections for the product formulas), and
    ``log_paper_asymptotic`` the leading-order headline form.
    ``log_lower`` is a certified lower bound on the true log-size, always
    available.
    """

    log_exact: float | None
    log_product_form: float
    log_paper_asymptotic: float
    log_lower: float

    @property
    def best(self) -> float:
        return self.log_exact if self.log_exact is not None else self.log_lower


def _log_ordered_selections(p: int, m: int) -> float:
    """log of C(p, m) C(p-m, m) ... for floor(p/m) factors."""
    out = 0.0
    rest = p
    for _ in range(p // m):
        out += math.log(math.comb(rest, m))
        rest -= m
    return out


def log_cardinality(spec: EnsembleSpec, alpha: float = 1.0) -> LogCardinality:
    """Exact and closed-form log-cardinalities of an ensemble, in nats.

    ``alpha`` only affects the asymptotic form for VariableCliques, which is
    ``(alpha p / 2) log(p / d_max)``.
    """
    k, p = spec.kind, spec.p
    log_exact = _log_exact(spec)
    if k is EnsembleKind.ISOLATED_EDGES:
        stated = _log_ordered_selections(p, 2)
        asym = p * math.log(p)
    elif k is EnsembleKind.CLIQUE_MINUS_ONE:
        stated = log_exact
        asym = math.log(p * (spec.m - 1))
    elif k is EnsembleKind.COMPLETE_DEGREE_BOUNDED:
        d = spec.d
        stated = asym = d * p / 4 * math.log(p / (8 * d))
    elif k is EnsembleKind.DISJOINT_CLIQUES:
        m = spec.m
        half = p // 2
        stated = 0.5 * (p // m) * math.log(math.comb(half, m)) if half >= m else 0.0
        asym = p / 2 * math.log(p / (m - 1))
    elif k is EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE:
        stated = log_exact
        dmax = max(spec.sizes) - 1
        asym = math.log(dmax * (dmax + 1)) if dmax >= 1 else 0.0
    else:
        stated = log_exact
        dmax = max(spec.sizes) - 1
        asym = alpha * p / 2 * math.log(p / dmax)
    if log_exact is not None:
        lower = log_exact
    else:
        lower = _degree_bounded_log_lower(p, spec.d)
    return LogCardinality(log_exact, stated, asym, lower)


def _degree_bounded_log_lower(p: int, d: int) -> float:
    # every matching and every (d+1)-clique union lies in G_d
    cands = [
        _log_set_partitions((2,) * (p // 2)),
        _log_set_partitions((d + 1,) * (p // (d + 1))),
        d * p / 4 * math.log(p / (8 * d)),
    ]
    return max(cands)


# ---------------------------------------------------------------------------
# enumeration and sampling


def _partitions(nodes: tuple[int, ...], sizes: tuple[int, ...]) -> Iterator[list[tuple[int, ...]]]:
    """Each set partition of ``nodes`` into blocks with the size multiset
    ``sizes``, exactly once.  The smallest free node picks its block size."""
    if not nodes:
        yield []
        return
    first, rest = nodes[0], nodes[1:]
    for s in sorted(set(sizes)):
        remaining = list(sizes)
        remaining.remove(s)
        for mates in itertools.combinations(rest, s - 1):
            left = tuple(v for v in rest if v not in mates)
            for tail in _partitions(left, tuple(remaining)):
                yield [(first, *mates)] + tail


def _blocks(sizes: Sequence[int]) -> list[tuple[int, ...]]:
    out, start = [], 0
    for s in sizes:
        out.append(tuple(range(start, start + s)))
        start += s
    return out


def _degree_bounded_graphs(p: int, d: int) -> Iterator[Graph]:
    pairs = list(itertools.combinations(range(p), 2))
    deg = [0] * p
    chosen: list[tuple[int, int]] = []

    def rec(idx):
        if idx == len(pairs):
            yield Graph(p, tuple(chosen))
            return
        yield from rec(idx + 1)
        i, j = pairs[idx]
        if deg[i] < d and deg[j] < d:
            deg[i] += 1
            deg[j] += 1
            chosen.append((i, j))
            yield from rec(idx + 1)
            chosen.pop()
            deg[i] -= 1
            deg[j] -= 1

    yield from rec(0)


def iter_ensemble(spec: EnsembleSpec) -> Iterator[Graph]:
    """Lazily yield every distinct graph of the family once."""
    k, p = spec.kind, spec.p
    if k in (EnsembleKind.ISOLATED_EDGES, EnsembleKind.DISJOINT_CLIQUES, EnsembleKind.VARIABLE_CLIQUES):
        sizes = spec.clique_sizes
        nodes = tuple(range(sum(sizes)))
        for part in _partitions(nodes, tuple(sizes)):
            yield clique_union(part, p)
    elif k in (EnsembleKind.CLIQUE_MINUS_ONE, EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE):
        base = clique_union(_blocks(spec.clique_sizes), p)
        base_edges = set(base.edges)
        if k is EnsembleKind.CLIQUE_MINUS_ONE:
            for e in base.edges:
                yield Graph(p, tuple(base_edges - {e}))
        else:
            per_block = [list(itertools.combinations(b, 2)) for b in _blocks(spec.sizes)]
            for removed in itertools.product(*per_block):
                yield Graph(p, tuple(base_edges - set(removed)))
    else:
        yield from _degree_bounded_graphs(p, spec.d)


def base_graph(spec: EnsembleSpec) -> Graph:
    """The full-clique base graph G' of the clique-minus-one kinds."""
    if spec.kind not in (EnsembleKind.CLIQUE_MINUS_ONE, EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE):
        raise ValueError(f"{spec.kind.value} has no base graph")
    return clique_union(_blocks(spec.clique_sizes), spec.p)


def enumerate_ensemble(spec: EnsembleSpec, ceiling: int = DEFAULT_ENUMERATION_CEILING) -> list[Graph]:
    log_count = _log_exact(spec) if spec.kind is not EnsembleKind.COMPLETE_DEGREE_BOUNDED else None
    if log_count is not None and log_count > math.log(ceiling) + 1:
        raise EnsembleTooLarge(f"{spec.kind.value} family has about e^{log_count:.1f} graphs > ceiling {ceiling}")
    count = exact_count(spec) if spec.kind is not EnsembleKind.COMPLETE_DEGREE_BOUNDED or spec.p <= MAX_P_DEGREE_BOUNDED_COUNT else None
    if count is None:
        # no closed form; count while enumerating
        graphs = []
        for g in iter_ensemble(spec):
            graphs.append(g)
            if len(graphs) > ceiling:
                raise EnsembleTooLarge(f"{spec.kind.value} family exceeds ceiling {ceiling}")
        return graphs
    if count > ceiling:
        raise EnsembleTooLarge(f"{spec.kind.value} family has {count} graphs > ceiling {ceiling}")
    return list(iter_ensemble(spec))


def draw_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for draw ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


# rejection sampling guard for CompleteDegreeBounded beyond enumeration range
MAX_REJECTION_TRIES = 100_000


def sample_graph(spec: EnsembleSpec, rng: np.random.Generator, _family: list[Graph] | None = None) -> Graph:
    """One uniform draw from the family."""
    k, p = spec.kind, spec.p
    if k in (EnsembleKind.ISOLATED_EDGES, EnsembleKind.DISJOINT_CLIQUES, EnsembleKind.VARIABLE_CLIQUES):
        sizes = spec.clique_sizes
        perm = rng.permutation(sum(sizes))
        blocks, start = [], 0
        for s in sizes:
            blocks.append(perm[start:start + s].tolist())
            start += s
        return clique_union(blocks, p)
    if k is EnsembleKind.CLIQUE_MINUS_ONE:
        base = base_graph(spec)
        drop = base.edges[rng.integers(len(base.edges))]
        return Graph(p, tuple(e for e in base.edges if e != drop))
    if k is EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE:
        base = base_graph(spec)
        removed = set()
        for b in _blocks(spec.sizes):
            pairs = list(itertools.combinations(b, 2))
            removed.add(pairs[rng.integers(len(pairs))])
        return Graph(p, tuple(e for e in base.edges if e not in removed))
    if _family is not None:
        return _family[rng.integers(len(_family))]
    pairs = list(itertools.combinations(range(p), 2))
    for _ in range(MAX_REJECTION_TRIES):
        keep = rng.random(len(pairs)) < 0.5
        g = Graph(p, tuple(e for e, kept in zip(pairs, keep) if kept))
        if check_degree_bounded(g, spec.d):
            return g
    raise EnsembleTooLarge("rejection sampling for CompleteDegreeBounded did not terminate")


def build_ensemble(
    spec: EnsembleSpec,
    mode: str = "enumerate",
    count: int = 1,
    seed: int = 0,
    ceiling: int = DEFAULT_ENUMERATION_CEILING,
) -> list[Graph]:
    """Enumerate the family, or draw ``count`` i.i.d. uniform members.

    Draw ``i`` depends only on ``(seed, i)``.
    """
    spec.validate()
    if mode == "enumerate":
        return enumerate_ensemble(spec, ceiling)
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    family = None
    if spec.kind is EnsembleKind.COMPLETE_DEGREE_BOUNDED and spec.p <= MAX_P_DEGREE_BOUNDED_COUNT:
        family = enumerate_ensemble(spec, ceiling)
    return [sample_graph(spec, draw_rng(seed, i), family) for i in range(count)]


# ---------------------------------------------------------------------------
# degree statistics and subgraphs


@dataclass(frozen=True)
class DegreeStats:
    d_max: int
    d_avg: float
    d_min: int
    alpha: float
    d_min_alpha: int


def top_alpha_count(p: int, alpha: float) -> int:
    # guard against 0.5 * 20 = 10.000000000000002 style round-up
    return max(1, math.ceil(alpha * p - 1e-9))


def degree_stats(g: Graph, alpha: float = 1.0) -> DegreeStats:
    """Max/avg/min degree and the minimum degree among the ceil(alpha p)
    highest-degree nodes."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if g.p == 0:
        return DegreeStats(0, 0.0, 0, alpha, 0)
    deg = np.sort(g.degrees())[::-1]
    top = deg[: top_alpha_count(g.p, alpha)]
    return DegreeStats(int(deg[0]), float(deg.mean()), int(deg[-1]), alpha, int(top.min()))


def observed_nodes(z: Sequence[int]) -> tuple[int, ...]:
    return tuple(i for i, v in enumerate(z) if v)


def observed_subgraph(g: Graph, z: Sequence[int]) -> Graph:
    """Induced subgraph on the nodes with ``z == 1``, re-indexed in order."""
    if len(z) != g.p:
        raise ValueError(f"mask length {len(z)} does not match p={g.p}")
    keep = observed_nodes(z)
    index = {v: k for k, v in enumerate(keep)}
    edges = tuple((index[i], index[j]) for i, j in g.edges if i in index and j in index)
    return Graph(len(keep), edges)


def check_degree_bounded(g: Graph, d: int) -> bool:
    if d < 0:
        raise ValueError("degree bound must be non-negative")
    return g.p == 0 or int(g.degrees().max(initial=0)) <= d
