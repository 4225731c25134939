"""Active-learning sessions: query strategies, transcripts, and decoders.

A session alternates ``strategy.next_query`` and a fresh draw from the
hidden model until the strategy stops or the node budget is spent, then
hands the transcript to a decoder.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graphs import Graph, observed_nodes
from .models import (
    MISSING,
    GaussianParams,
    IsingParams,
    ModelParams,
    Observation,
    draw_observation,
    gaussian_covariance,
    ising_table,
    make_model,
    pattern_index,
)


class ProtocolViolation(RuntimeError):
    """A strategy broke the session rules (over budget, bad mask)."""


class DecodingError(RuntimeError):
    pass


@dataclass(frozen=True)
class QueryVector:
    mask: tuple[int, ...]

    def __post_init__(self):
        mask = tuple(int(v) for v in self.mask)
        if any(v not in (0, 1) for v in mask):
            raise ValueError("query mask must be binary")
        object.__setattr__(self, "mask", mask)

    @property
    def p(self) -> int:
        return len(self.mask)

    @property
    def count(self) -> int:
        return sum(self.mask)

    @property
    def nodes(self) -> tuple[int, ...]:
        return observed_nodes(self.mask)

    @classmethod
    def from_nodes(cls, p: int, nodes) -> "QueryVector":
        mask = [0] * p
        for v in nodes:
            if not 0 <= v < p:
                raise ValueError(f"node {v} outside [0, {p})")
            if mask[v]:
                raise ValueError(f"node {v} listed twice in one round")
            mask[v] = 1
        return cls(tuple(mask))


@dataclass
class Transcript:
    p: int
    budget: int
    rounds: list[tuple[QueryVector, Observation]] = field(default_factory=list)

    @property
    def used(self) -> int:
        return sum(q.count for q, _ in self.rounds)

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def append(self, query: QueryVector, obs: Observation) -> None:
        if query.p != self.p or obs.p != self.p:
            raise ProtocolViolation("query/observation length does not match p")
        if query.count > self.remaining:
            raise ProtocolViolation(
                f"query observes {query.count} nodes but only {self.remaining} remain in the budget"
            )
        for zi, xi in zip(query.mask, obs.values):
            if (xi is MISSING) != (zi == 0):
                raise ProtocolViolation("observation is not masked by its query")
        self.rounds.append((query, obs))

    def to_jsonl(self) -> str:
        lines = [json.dumps({"z": list(q.mask), "x": o.to_json()}) for q, o in self.rounds]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text: str, budget: int | None = None) -> "Transcript":
        rounds = []
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                rounds.append((QueryVector(tuple(rec["z"])), Observation.from_json(rec["x"])))
        p = rounds[0][0].p if rounds else 0
        used = sum(q.count for q, _ in rounds)
        out = cls(p, used if budget is None else budget)
        for q, o in rounds:
            out.append(q, o)
        return out


class Strategy(Protocol):
    def next_query(self, transcript: Transcript, rng: np.random.Generator) -> QueryVector | None:
        """Next mask, or None to stop.  Must depend only on the arguments."""


class Decoder(Protocol):
    def decode(self, transcript: Transcript) -> Graph: ...


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class PassiveRoundRobin:
    """Cycle through consecutive node blocks of size ``block``; never adaptive.

    The last block is shorter when ``block`` does not divide ``p``; the final
    round is truncated to whatever budget remains.
    """

    p: int
    block: int | None = None

    def __post_init__(self):
        b = self.p if self.block is None else self.block
        if not 1 <= b <= self.p:
            raise ValueError(f"block size must lie in [1, {self.p}]")
        object.__setattr__(self, "block", b)

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        return [tuple(range(s, min(s + self.block, self.p))) for s in range(0, self.p, self.block)]

    def next_query(self, transcript, rng=None):
        left = transcript.remaining
        if left <= 0:
            return None
        blocks = self.blocks
        nodes = blocks[len(transcript.rounds) % len(blocks)][:left]
        return QueryVector.from_nodes(self.p, nodes)

    def schedule(self, budget: int) -> list[QueryVector]:
        """The full (observation-independent) query sequence for ``budget``."""
        t = Transcript(self.p, budget)
        out = []
        while (q := self.next_query(t)) is not None:
            t.append(q, Observation(tuple(MISSING if v == 0 else 1 for v in q.mask)))
            out.append(q)
        return out


@dataclass(frozen=True)
class FixedSchedule:
    """Replay a fixed list of node sets cyclically (non-adaptive)."""

    p: int
    node_sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        sets = tuple(tuple(int(v) for v in s) for s in self.node_sets)
        for s in sets:
            if not s:
                raise ValueError("empty node set in schedule")
            QueryVector.from_nodes(self.p, s)  # range and duplicate checks
        object.__setattr__(self, "node_sets", sets)

    def next_query(self, transcript, rng=None):
        left = transcript.remaining
        if left <= 0 or not self.node_sets:
            return None
        nodes = self.node_sets[len(transcript.rounds) % len(self.node_sets)]
        if len(nodes) > left:
            return None
        return QueryVector.from_nodes(self.p, nodes)

    def schedule(self, budget: int) -> list[QueryVector]:
        t = Transcript(self.p, budget)
        out = []
        while (q := self.next_query(t)) is not None:
            t.append(q, Observation(tuple(MISSING if v == 0 else 1 for v in q.mask)))
            out.append(q)
        return out


def pair_dependence(transcript: Transcript, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Empirical dependence and co-observation count for every node pair.

    Binary data: mean of x_i x_j (sign agreement minus disagreement).
    Real data: |sum x_i x_j| / sqrt(sum x_i^2 sum x_j^2).
    """
    sxy = np.zeros((p, p))
    sxx = np.zeros((p, p))
    syy = np.zeros((p, p))
    counts = np.zeros((p, p), dtype=int)
    binary = True
    for q, o in transcript.rounds:
        idx = np.array(q.nodes)
        if len(idx) < 2:
            continue
        x = np.array([o.values[i] for i in idx], dtype=float)
        if binary and np.any(np.abs(np.abs(x) - 1) > 0):
            binary = False
        sub = np.ix_(idx, idx)
        sxy[sub] += np.outer(x, x)
        sq = x * x
        sxx[sub] += sq[:, None]
        syy[sub] += sq[None, :]
        counts[sub] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        if binary:
            dep = np.where(counts > 0, sxy / np.maximum(counts, 1), 0.0)
        else:
            dep = np.where(counts > 0, np.abs(sxy) / np.sqrt(sxx * syy), 0.0)
    dep = np.nan_to_num(dep)
    np.fill_diagonal(dep, 0.0)
    return dep, counts


@dataclass(frozen=True)
class AdaptivePairProbe:
    """Screen with full observations, then probe the most dependent pairs.

    Phase 1 spends ``fraction`` of the budget on full-p rounds.  Phase 2
    ranks pairs by empirical dependence (recomputed from every round so far)
    and each round queries, among the ``n_candidates`` top-ranked pairs, the
    one co-observed least often.
    """

    p: int
    fraction: float = 0.5
    n_candidates: int | None = None

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError("screening fraction must lie in (0, 1]")
        if self.p < 2:
            raise ValueError("pair probing needs p >= 2")

    def next_query(self, transcript, rng=None):
        left = transcript.remaining
        if left <= 0:
            return None
        screen_rounds = math.floor(self.fraction * transcript.budget / self.p + 1e-9)
        n_full = sum(1 for q, _ in transcript.rounds if q.count == self.p)
        if n_full < screen_rounds and left >= self.p:
            return QueryVector((1,) * self.p)
        if self.fraction >= 1:
            if left >= self.p:
                return QueryVector((1,) * self.p)
            return QueryVector.from_nodes(self.p, range(left))
        if left < 2:
            return None
        dep, counts = pair_dependence(transcript, self.p)
        pairs = list(itertools.combinations(range(self.p), 2))
        ranked = sorted(pairs, key=lambda e: (-dep[e], e))
        k = self.n_candidates or self.p
        cands = ranked[:k]
        pick = min(cands, key=lambda e: (counts[e], ranked.index(e)))
        return QueryVector.from_nodes(self.p, pick)


@dataclass(frozen=True)
class RandomSubsets:
    """Random non-empty masks; used to fuzz the protocol invariants."""

    p: int
    max_size: int | None = None

    def next_query(self, transcript, rng):
        left = transcript.remaining
        if left <= 0:
            return None
        hi = min(left, self.max_size or self.p, self.p)
        k = int(rng.integers(1, hi + 1))
        nodes = rng.choice(self.p, size=k, replace=False)
        return QueryVector.from_nodes(self.p, nodes.tolist())


# ---------------------------------------------------------------------------
# decoders


def _edge_key(g: Graph):
    return g.edges


def _ising_loglik(family: Sequence[Graph], params: IsingParams, transcript: Transcript) -> np.ndarray:
    # sufficient statistics: counts of (observed node set, sign pattern)
    stats = Counter()
    for q, o in transcript.rounds:
        if q.count:
            nodes = q.nodes
            stats[(nodes, pattern_index([o.values[v] for v in nodes]))] += 1
    ll = np.zeros(len(family))
    for gi, g in enumerate(family):
        total = 0.0
        for (nodes, idx), c in stats.items():
            mask = [0] * g.p
            for v in nodes:
                mask[v] = 1
            prob = ising_table(g, params, mask).probs[idx]
            total += c * (math.log(prob) if prob > 0 else -math.inf)
        ll[gi] = total
    return ll


def _gaussian_loglik(family: Sequence[Graph], params: GaussianParams, transcript: Transcript) -> np.ndarray:
    groups: dict[tuple[int, ...], list] = {}
    for q, o in transcript.rounds:
        if q.count:
            groups.setdefault(q.nodes, []).append([o.values[v] for v in q.nodes])
    ll = np.zeros(len(family))
    for gi, g in enumerate(family):
        cov = gaussian_covariance(g, params)
        total = 0.0
        for nodes, rows in groups.items():
            x = np.array(rows, dtype=float)
            sub = cov[np.ix_(nodes, nodes)]
            cf = cho_factor(sub, lower=True)
            logdet = 2 * np.log(np.diag(cf[0])).sum()
            quad = np.sum(x * cho_solve(cf, x.T).T)
            total += -0.5 * (quad + len(rows) * (logdet + len(nodes) * math.log(2 * math.pi)))
        ll[gi] = total
    return ll


def log_likelihoods(family: Sequence[Graph], params: ModelParams, transcript: Transcript) -> np.ndarray:
    if isinstance(params, IsingParams):
        return _ising_loglik(family, params, transcript)
    return _gaussian_loglik(family, params, transcript)


# likelihood gaps below this count as ties (resolved lexicographically)
TIE_TOL = 1e-9


def ml_decode(family: Sequence[Graph], params: ModelParams, transcript: Transcript) -> Graph:
    """Maximum-likelihood member of ``family`` given every round's exact
    marginal likelihood; ties go to the smallest edge list."""
    if not family:
        raise DecodingError("empty family")
    if any(g.p != transcript.p for g in family):
        raise DecodingError("transcript and family disagree on p")
    ll = log_likelihoods(family, params, transcript)
    best = ll.max()
    tied = [g for g, v in zip(family, ll) if v >= best - TIE_TOL]
    return min(tied, key=_edge_key)


def dependence_decode(family: Sequence[Graph], params: ModelParams, transcript: Transcript) -> Graph:
    """Pick the member whose edges carry the largest summed empirical
    dependence; a cheap non-likelihood baseline."""
    if not family:
        raise DecodingError("empty family")
    dep, _ = pair_dependence(transcript, transcript.p)
    scores = [sum(dep[e] for e in g.edges) for g in family]
    best = max(scores)
    tied = [g for g, s in zip(family, scores) if s >= best - TIE_TOL]
    return min(tied, key=_edge_key)


@dataclass
class FamilyDecoder:
    """Binds a decoding rule to a family and the true parameters."""

    family: Sequence[Graph]
    params: ModelParams
    rule: Callable = ml_decode

    def decode(self, transcript: Transcript) -> Graph:
        return self.rule(self.family, self.params, transcript)


# ---------------------------------------------------------------------------
# sessions


@dataclass
class SessionResult:
    g_hat: Graph
    transcript: Transcript


def run_session(hidden: Graph, params: ModelParams, strategy, decoder, budget: int, rng: np.random.Generator) -> SessionResult:
    """Run one active-learning session against ``hidden``.

    Raises ProtocolViolation if the strategy asks for more nodes than
    remain; decoder failures surface as DecodingError.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    model = make_model(hidden, params)
    transcript = Transcript(hidden.p, budget)
    # a session can never need more rounds than node observations
    for _ in range(budget):
        q = strategy.next_query(transcript, rng)
        if q is None:
            break
        if q.p != hidden.p:
            raise ProtocolViolation("query length does not match p")
        if q.count > transcript.remaining:
            raise ProtocolViolation(
                f"query observes {q.count} nodes but only {transcript.remaining} remain in the budget"
            )
        if q.count == 0:
            raise ProtocolViolation("empty query would never exhaust the budget")
        transcript.append(q, draw_observation(model, q.mask, rng))
    g_hat = decoder.decode(transcript)
    if not isinstance(g_hat, Graph):
        raise DecodingError("decoder did not return a Graph")
    return SessionResult(g_hat, transcript)
