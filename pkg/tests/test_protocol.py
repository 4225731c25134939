import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activegms import protocol
from activegms.graphs import EnsembleKind, EnsembleSpec, Graph, enumerate_ensemble
from activegms.models import MISSING, GaussianParams, IsingParams, Observation, ising_table
from activegms.protocol import (
    AdaptivePairProbe,
    DecodingError,
    FamilyDecoder,
    FixedSchedule,
    PassiveRoundRobin,
    ProtocolViolation,
    QueryVector,
    RandomSubsets,
    Transcript,
    dependence_decode,
    log_likelihoods,
    ml_decode,
    run_session,
)

FAM4 = enumerate_ensemble(EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 4))
LAM = IsingParams(1.0)


def _obs(mask, vals):
    it = iter(vals)
    return Observation(tuple(next(it) if z else MISSING for z in mask))


def test_query_vector():
    q = QueryVector.from_nodes(5, [3, 1])
    assert q.mask == (0, 1, 0, 1, 0) and q.count == 2 and q.nodes == (1, 3)
    with pytest.raises(ValueError):
        QueryVector((0, 2))
    with pytest.raises(ValueError):
        QueryVector.from_nodes(3, [1, 1])
    with pytest.raises(ValueError):
        QueryVector.from_nodes(3, [3])


def test_transcript_budget_and_masking():
    t = Transcript(4, 3)
    q = QueryVector.from_nodes(4, [0, 1])
    t.append(q, _obs(q.mask, [1, -1]))
    assert t.used == 2 and t.remaining == 1
    with pytest.raises(ProtocolViolation):
        t.append(q, _obs(q.mask, [1, 1]))  # over budget
    q1 = QueryVector.from_nodes(4, [2])
    with pytest.raises(ProtocolViolation):
        t.append(q1, Observation((1, MISSING, MISSING, MISSING)))  # wrong coordinate filled
    t.append(q1, _obs(q1.mask, [1]))
    assert t.remaining == 0


def test_transcript_jsonl_round_trip():
    t = Transcript(3, 10)
    for nodes, vals in (([0, 2], [1, -1]), ([1], [0.25])):
        q = QueryVector.from_nodes(3, nodes)
        t.append(q, _obs(q.mask, vals))
    text = t.to_jsonl()
    assert '"x": [1, null, -1]' in text
    back = Transcript.from_jsonl(text, budget=10)
    assert back.to_jsonl() == text and back.used == 3


def test_passive_schedule():
    s = PassiveRoundRobin(5, 2)
    assert s.blocks == [(0, 1), (2, 3), (4,)]
    sched = s.schedule(6)
    assert [q.nodes for q in sched] == [(0, 1), (2, 3), (4,), (0,)]
    assert sum(q.count for q in sched) == 6
    with pytest.raises(ValueError):
        PassiveRoundRobin(3, 4)


def test_fixed_schedule_stops_when_set_does_not_fit():
    s = FixedSchedule(4, ((0, 1), (2, 3)))
    assert [q.nodes for q in s.schedule(5)] == [(0, 1), (2, 3)]
    with pytest.raises(ValueError):
        FixedSchedule(4, ((0, 0),))
    with pytest.raises(ValueError):
        FixedSchedule(4, ((),))


def test_adaptive_screens_then_probes():
    rng = np.random.default_rng(0)
    g = FAM4[0]
    res = run_session(g, LAM, AdaptivePairProbe(4, 0.5), FamilyDecoder(FAM4, LAM), 16, rng)
    counts = [q.count for q, _ in res.transcript.rounds]
    assert counts[:2] == [4, 4]  # floor(0.5 * 16 / 4) screening rounds
    assert all(c == 2 for c in counts[2:])
    assert res.transcript.used == 16
    with pytest.raises(ValueError):
        AdaptivePairProbe(4, 0.0)


def test_ml_decode_recovers_with_many_samples():
    rng = np.random.default_rng(1)
    dec = FamilyDecoder(FAM4, IsingParams(1.5))
    for g in FAM4:
        res = run_session(g, IsingParams(1.5), PassiveRoundRobin(4), dec, 400, rng)
        assert res.g_hat == g


def test_ml_tie_break_is_lexicographic():
    # no data: every member ties, the smallest edge tuple wins
    t = Transcript(4, 0)
    assert ml_decode(FAM4, LAM, t) == min(FAM4, key=lambda g: g.edges)
    assert dependence_decode(FAM4, LAM, t) == min(FAM4, key=lambda g: g.edges)


def test_ising_loglik_matches_tables():
    t = Transcript(4, 10)
    rounds = [([0, 1], [1, 1]), ([0, 1], [1, -1]), ([2, 3], [-1, -1]), ([0, 2, 3], [1, 1, -1])]
    for nodes, vals in rounds:
        q = QueryVector.from_nodes(4, nodes)
        t.append(q, _obs(q.mask, vals))
    ll = log_likelihoods(FAM4, LAM, t)
    for g, got in zip(FAM4, ll):
        want = 0.0
        for nodes, vals in rounds:
            q = QueryVector.from_nodes(4, nodes)
            idx = int("".join("1" if v > 0 else "0" for v in vals), 2)
            want += math.log(ising_table(g, LAM, q.mask).probs[idx])
        assert got == pytest.approx(want, abs=1e-12)


def test_gaussian_loglik_matches_scipy():
    from scipy.stats import multivariate_normal

    from activegms.models import gaussian_covariance

    params = GaussianParams(0.4)
    t = Transcript(4, 20)
    rng = np.random.default_rng(2)
    rows = []
    for nodes in ([0, 1], [1, 2, 3], [0, 1]):
        q = QueryVector.from_nodes(4, nodes)
        vals = rng.normal(size=len(nodes)).tolist()
        rows.append((nodes, vals))
        t.append(q, _obs(q.mask, vals))
    ll = log_likelihoods(FAM4, params, t)
    for g, got in zip(FAM4, ll):
        cov = gaussian_covariance(g, params)
        want = sum(multivariate_normal(cov=cov[np.ix_(n, n)]).logpdf(v) for n, v in rows)
        assert got == pytest.approx(want, abs=1e-10)


def test_decoder_errors():
    with pytest.raises(DecodingError):
        ml_decode([], LAM, Transcript(4, 0))
    with pytest.raises(DecodingError):
        ml_decode([Graph(3)], LAM, Transcript(4, 0))


class _Empty:
    def next_query(self, transcript, rng):
        return QueryVector((0, 0, 0, 0))


class _Greedy:
    def next_query(self, transcript, rng):
        return QueryVector((1, 1, 1, 1))


def test_run_session_violations():
    rng = np.random.default_rng(0)
    dec = FamilyDecoder(FAM4, LAM)
    with pytest.raises(ProtocolViolation):
        run_session(FAM4[0], LAM, _Greedy(), dec, 5, rng)
    with pytest.raises(ProtocolViolation):
        run_session(FAM4[0], LAM, _Empty(), dec, 5, rng)
    with pytest.raises(ValueError):
        run_session(FAM4[0], LAM, _Greedy(), dec, -1, rng)


@settings(max_examples=40)
@given(st.integers(0, 30), st.integers(1, 4), st.integers(0, 2**31), st.booleans())
def test_random_sessions_respect_budget(budget, max_size, seed, gaussian):
    params = GaussianParams(0.3) if gaussian else LAM
    rng = np.random.default_rng(seed)
    res = run_session(FAM4[seed % 3], params, RandomSubsets(4, max_size), FamilyDecoder(FAM4, params, dependence_decode), budget, rng)
    t = res.transcript
    assert t.used <= budget
    assert t.used == budget  # random subsets always fit the remainder
    for q, o in t.rounds:
        assert all((x is MISSING) == (z == 0) for z, x in zip(q.mask, o.values))


def test_sessions_reproducible():
    dec = FamilyDecoder(FAM4, LAM)
    for strat in (PassiveRoundRobin(4, 2), AdaptivePairProbe(4, 0.25), RandomSubsets(4)):
        a = run_session(FAM4[1], LAM, strat, dec, 20, np.random.default_rng(9))
        b = run_session(FAM4[1], LAM, strat, dec, 20, np.random.default_rng(9))
        assert a.transcript.to_jsonl() == b.transcript.to_jsonl() and a.g_hat == b.g_hat


def test_pair_dependence_binary():
    t = Transcript(3, 12)
    for vals in ([1, 1, -1], [-1, -1, 1], [1, 1, 1], [-1, -1, -1]):
        q = QueryVector((1, 1, 1))
        t.append(q, Observation(tuple(vals)))
    dep, counts = protocol.pair_dependence(t, 3)
    assert dep[0, 1] == 1.0 and dep[0, 2] == 0.0 and counts[0, 1] == 4
