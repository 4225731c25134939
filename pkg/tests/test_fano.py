import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from activegms.fano import (
    channel_capacity,
    ensemble2a_bound,
    ensemble4a_bound,
    exact_conditional_mi,
    fano_error_floor,
    mi_budget,
    per_node_capacity,
    remainder_factor,
    theorem_gaussian_bound,
    theorem_ising_bound,
)
from activegms.graphs import EnsembleKind, EnsembleSpec, enumerate_ensemble
from activegms.models import GaussianParams, IsingParams, ising_table_bruteforce

P4 = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 4)
LAM1 = IsingParams(1.0)


def _entropy(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _mi_oracle(spec, params, z):
    """H(mixture) - mean H(component), from brute-force tables."""
    tables = np.array([ising_table_bruteforce(g, params, z).probs for g in enumerate_ensemble(spec)])
    return _entropy(tables.mean(axis=0)) - np.mean([_entropy(t) for t in tables])


def test_fano_floor_values():
    assert fano_error_floor(math.log(3), 0.0).implied_error_floor == pytest.approx(1 - math.log(2) / math.log(3))
    assert fano_error_floor(math.log(3), 10.0).implied_error_floor == 0.0
    assert fano_error_floor(10.0, 1.0).implied_error_floor == pytest.approx(1 - (1 + math.log(2)) / 10)
    with pytest.raises(ValueError):
        fano_error_floor(0.0, 1.0)
    with pytest.raises(ValueError):
        fano_error_floor(1.0, -1.0)


def test_remainder_factor_clamped():
    assert remainder_factor(0.1, math.log(2)) == 0.0
    assert remainder_factor(0.1, 100.0) == pytest.approx(0.9 - math.log(2) / 100)
    assert remainder_factor(0.1, -1.0) == 0.0


def test_exact_mi_frozen_pair():
    mi = exact_conditional_mi(P4, LAM1, (1, 1, 0, 0))
    assert mi == pytest.approx(_mi_oracle(P4, LAM1, (1, 1, 0, 0)), abs=1e-14)
    assert mi == pytest.approx(0.0766921, abs=1e-7)


@pytest.mark.parametrize(
    "spec,lam",
    [
        (P4, 0.5),
        (EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 6), 1.3),
        (EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 6, m=3), 1.0),
        (EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, 6, m=3), 0.4),
    ],
)
def test_exact_mi_matches_oracle_on_all_masks(spec, lam):
    params = IsingParams(lam)
    for z in itertools.product((0, 1), repeat=spec.p):
        if sum(z) in (1, 2, spec.p):
            assert exact_conditional_mi(spec, params, z) == pytest.approx(_mi_oracle(spec, params, z), abs=1e-12)


def test_mi_inputs_rejected():
    with pytest.raises(TypeError):
        exact_conditional_mi(P4, GaussianParams(0.5), (1, 1, 0, 0))
    with pytest.raises(ValueError):
        exact_conditional_mi(P4, LAM1, (1, 1))
    assert exact_conditional_mi(P4, LAM1, (0, 0, 0, 0)) == 0.0


def test_capacity_dominates_uniform_mi():
    z = (1, 1, 0, 0)
    cap = channel_capacity(P4, LAM1, z)
    assert cap == pytest.approx(0.0899086, abs=1e-6)
    assert cap >= exact_conditional_mi(P4, LAM1, z)
    # the two distinct output laws are "edge present" vs "absent"; capacity of
    # a binary-input channel never exceeds log 2
    assert cap <= math.log(2)
    assert per_node_capacity(P4, LAM1) == pytest.approx(0.0926, abs=1e-4)
    assert per_node_capacity(P4, LAM1) >= cap / 2


@pytest.mark.parametrize(
    "spec,lam",
    [
        (P4, 1.0),
        (EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 6), 0.7),
        (EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 6, m=3), 1.0),
        (EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 8, m=4), 0.5),
    ],
)
def test_budget_dominates_exact_mi(spec, lam):
    params = IsingParams(lam)
    for z in itertools.product((0, 1), repeat=spec.p):
        if any(z):
            assert exact_conditional_mi(spec, params, z) <= mi_budget(spec, params, sum(z)) + 1e-12


def test_budget_errors():
    with pytest.raises(ValueError):
        mi_budget(EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 6, m=3), IsingParams(0.3), 4)
    with pytest.raises(TypeError):
        mi_budget(EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, 6, m=3), IsingParams(1.0), 4)
    with pytest.raises(ValueError):
        mi_budget(P4, LAM1, -1)
    g = mi_budget(P4, GaussianParams(0.5), 4)
    assert g == pytest.approx(2 * 0.5 * math.log(1 / 0.75))


# bound evaluators ---------------------------------------------------------------


def test_ising_prefactors():
    r = theorem_ising_bound(100, 4, 1.0, 0.1)
    assert r.term("isolated_edges").prefactor == pytest.approx(2 * 100 * math.log(100) / math.tanh(1), rel=1e-12)
    assert r.term("isolated_edges").prefactor == pytest.approx(1209.35, rel=1e-5)
    assert r.term("complete_degree_bounded").prefactor == pytest.approx(164.386, rel=1e-5)
    r = theorem_ising_bound(100, 4, 0.5, 0.1)
    assert r.term("clique_minus_one").prefactor == pytest.approx(math.e**2 * math.log(400) / (4 * math.e**0.5), rel=1e-12)
    assert r.n_lower == max(t.value for t in r.terms)


def test_gaussian_prefactors():
    r = theorem_gaussian_bound(100, 4, 0.5, 0.1)
    assert r.term("isolated_edges").prefactor == pytest.approx(400 * math.log(100) / math.log(4 / 3), rel=1e-12)
    assert r.term("disjoint_cliques").prefactor == pytest.approx(800 * math.log(25) / math.log(26), rel=1e-12)


def test_inapplicable_term_is_zero():
    r = theorem_ising_bound(50, 2, 0.3, 0.1)
    t = r.term("clique_minus_one")
    assert not t.applicable and t.value == 0.0
    assert any("not applicable" in w for w in r.warnings)


def test_appendix_evaluators():
    r = ensemble2a_bound((5, 3, 2), 0.5, 0.1)
    assert r.terms[0].prefactor == pytest.approx(3.3565, abs=1e-4)
    assert r.terms[0].remainder_factor == pytest.approx(0.9 - math.log(2) / math.log(5))
    assert r.n_lower == pytest.approx(1.5753, abs=1e-4)
    # tiny d_max: remainder non-positive, clamped and flagged
    small = ensemble2a_bound((2, 2), 1.0, 0.5)
    assert small.n_lower == 0.0 and small.warnings
    r4 = ensemble4a_bound((5, 5, 3, 3, 2, 2), 0.5, 0.5, 0.1)
    assert r4.params["d_min_alpha"] == 4
    assert r4.terms[0].prefactor == pytest.approx(2 * 0.5 * 20 * 4 * math.log(5) / math.log(26), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2])
def test_delta_validated(bad):
    with pytest.raises(ValueError):
        theorem_ising_bound(10, 2, 1.0, bad)


def test_report_json_shape():
    obj = theorem_ising_bound(20, 3, 1.0, 0.1).to_json()
    assert set(obj) == {"params", "terms", "n_lower", "headline", "warnings"}
    assert [t["name"] for t in obj["terms"]] == ["isolated_edges", "clique_minus_one", "complete_degree_bounded"]


@given(st.integers(10, 400), st.integers(1, 6), st.floats(0.2, 3.0))
def test_ising_terms_grow_with_p(p, d, lam):
    a = theorem_ising_bound(p, d, lam, 0.1)
    b = theorem_ising_bound(p + 10, d, lam, 0.1)
    # raw prefactors can be negative (p < 8d); the clamped values are monotone
    for ta, tb in zip(a.terms, b.terms):
        assert tb.value >= ta.value - 1e-9


@given(st.floats(0.1, 20.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_floor_monotone_in_information(log_t, i1, i2):
    lo, hi = sorted((i1, i2))
    assert fano_error_floor(log_t, hi).implied_error_floor <= fano_error_floor(log_t, lo).implied_error_floor
    assert 0.0 <= fano_error_floor(log_t, lo).implied_error_floor <= 1.0


def test_term2_grows_exponentially_in_lambda_d():
    vals = [theorem_ising_bound(1000, d, 1.0, 0.1).term("clique_minus_one").prefactor for d in range(2, 12)]
    ratios = [b / a for a, b in zip(vals, vals[1:])]
    assert all(r > 1.5 for r in ratios)
