"""Named invariant checks, runnable as a suite from the CLI.

Every check returns ``(passed, margin)`` where the margin is the worst
observed slack (negative means violated).  Implementations are looked up
through their modules at call time so a perturbed implementation can be
swapped in for mutation testing.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import divergence, fano, graphs, harness, models, protocol
from .graphs import EnsembleKind, EnsembleSpec, Graph

CHI2_ALPHA = 1e-3


@dataclass
class CheckResult:
    name: str
    module: str
    passed: bool
    margin: float
    runtime: float
    detail: str = ""


CHECKS: dict[str, list[tuple[str, Callable]]] = {}


def check(module: str):
    def register(fn):
        CHECKS.setdefault(module, []).append((fn.__name__, fn))
        return fn

    return register


def _random_graph(p: int, rng: np.random.Generator, max_comp: int = 6) -> Graph:
    """Random graph whose components stay small: random edges inside random blocks."""
    perm = rng.permutation(p)
    edges = []
    start = 0
    while start < p:
        size = int(rng.integers(1, max_comp + 1))
        block = perm[start:start + size]
        for i, j in itertools.combinations(block, 2):
            if rng.random() < 0.6:
                edges.append((int(i), int(j)))
        start += size
    return Graph(p, tuple(edges))


# ---------------------------------------------------------------------------
# graph_core


@check("graph_core")
def enumeration_matches_closed_form():
    specs = [
        EnsembleSpec(EnsembleKind.ISOLATED_EDGES, p) for p in range(2, 11)
    ] + [
        EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 12, m=4),
        EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 11, m=3),
        EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, 6, m=3),
        EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, 9, m=3),
        EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, 10, m=3),
        EnsembleSpec(EnsembleKind.VARIABLE_CLIQUES, 9, sizes=(4, 3, 2)),
        EnsembleSpec(EnsembleKind.VARIABLE_CLIQUES, 10, sizes=(3, 3, 2, 2)),
        EnsembleSpec(EnsembleKind.VARIABLE_CLIQUES_MINUS_ONE, 10, sizes=(5, 3, 2)),
    ]
    for spec in specs:
        fam = graphs.enumerate_ensemble(spec)
        if len(set(fam)) != len(fam) or round(math.exp(graphs.log_cardinality(spec).log_exact)) != len(fam):
            return False, -1.0
    return True, 0.0


@check("graph_core")
def uniform_sampling_chi_square():
    spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 6)
    fam = graphs.enumerate_ensemble(spec)
    index = {g: i for i, g in enumerate(fam)}
    draws = graphs.build_ensemble(spec, "sample", count=100_000, seed=7)
    counts = np.bincount([index[g] for g in draws], minlength=len(fam))
    pval = stats.chisquare(counts).pvalue
    return pval > CHI2_ALPHA, pval - CHI2_ALPHA


@check("graph_core")
def ensemble_degree_profiles():
    worst = 0.0
    for p in range(2, 10):
        for g in graphs.enumerate_ensemble(EnsembleSpec(EnsembleKind.ISOLATED_EDGES, p)):
            deg = g.degrees()
            if set(deg.tolist()) - {0, 1} or (deg == 0).sum() != p % 2:
                return False, -1.0
    for p, m in ((6, 3), (7, 3), (8, 4)):
        for g in graphs.enumerate_ensemble(EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, p, m=m)):
            if set(g.degrees().tolist()) - {0, m - 1}:
                return False, -1.0
    for d in (2, 3, 4):
        for g in graphs.enumerate_ensemble(EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 2 * (d + 1), m=d + 1)):
            if not graphs.check_degree_bounded(g, d):
                return False, -1.0
    return True, worst


@check("graph_core")
def nested_mask_subgraph():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = int(rng.integers(1, 12))
        g = _random_graph(p, rng)
        z1 = (rng.random(p) < 0.7).astype(int)
        z2 = z1 * (rng.random(p) < 0.7)
        direct = graphs.observed_subgraph(g, z2)
        inner = graphs.observed_subgraph(g, z1)
        restricted = [int(z2[i]) for i in range(p) if z1[i]]
        if graphs.observed_subgraph(inner, restricted) != direct:
            return False, -1.0
    return True, 0.0


# ---------------------------------------------------------------------------
# mrf_models


@check("mrf_models")
def factorized_matches_bruteforce():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(60):
        p = int(rng.integers(1, 13))
        g = _random_graph(p, rng)
        params = models.IsingParams(float(rng.uniform(0.1, 3)))
        z = tuple(int(v) for v in (rng.random(p) < 0.6))
        a = models.ising_table(g, params, z)
        b = models.ising_table_bruteforce(g, params, z)
        worst = max(worst, float(np.abs(a.probs - b.probs).max()), abs(a.log_partition - b.log_partition))
    return worst < 1e-12, 1e-12 - worst


@check("mrf_models")
def table_normalized_and_flip_symmetric():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(60):
        p = int(rng.integers(1, 13))
        g = _random_graph(p, rng)
        t = models.ising_table(g, models.IsingParams(float(rng.uniform(0.1, 4))), tuple(int(v) for v in (rng.random(p) < 0.6)))
        worst = max(worst, abs(t.probs.sum() - 1), float(np.abs(t.probs - t.probs[::-1]).max()))
    return worst < 1e-12, 1e-12 - worst


@check("mrf_models")
def covariance_round_trip():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        p = int(rng.integers(2, 10))
        g = graphs.sample_graph(EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, p, m=2 + int(rng.integers(0, p - 1))), rng)
        for cons in models.Construction:
            tau = float(rng.uniform(0.05, 0.45 if cons is models.Construction.EDGE else 0.95))
            try:
                theta = models.gaussian_precision(g, models.GaussianParams(tau, cons))
            except models.NotPositiveDefinite:
                continue
            back = np.linalg.inv(models.covariance_from_precision(theta))
            worst = max(worst, float(np.abs(back - theta).max()))
    return worst < 1e-8, 1e-8 - worst


@check("mrf_models")
def clique_det_trace_closed_form():
    worst = 0.0
    for m in range(1, 11):
        for a in (0.1, 1.0, 10.0):
            if m >= 2:
                g = graphs.clique_union([range(m)], m)
                theta = models.gaussian_precision(g, models.GaussianParams(a / (1 + a), "CliqueForm"))
            else:
                theta = np.array([[1 + a]])
            cov = models.covariance_from_precision(theta)
            for mt in range(1, m + 1):
                sub = models.marginal_covariance(cov, [1] * mt + [0] * (m - mt))
                det_cf = 1 - mt * a / (1 + m * a)
                tr_cf = mt * (1 - a / (1 + m * a))
                worst = max(worst, abs(np.linalg.det(sub) - det_cf), abs(np.trace(sub) - tr_cf))
    return worst < 1e-10, 1e-10 - worst


@check("mrf_models")
def sampler_matches_table():
    g = Graph(4, ((0, 1), (1, 2)))
    params = models.IsingParams(0.8)
    z = (1, 1, 1, 0)
    table = models.ising_table(g, params, z)
    rng = np.random.default_rng(6)
    model = models.IsingModel(g, params)
    counts = np.zeros(8)
    for _ in range(100_000):
        obs = models.draw_observation(model, z, rng)
        counts[models.pattern_index(obs.observed_values())] += 1
    pval = stats.chisquare(counts, table.probs * counts.sum()).pvalue
    return pval > CHI2_ALPHA, pval - CHI2_ALPHA


# ---------------------------------------------------------------------------
# divergence_kit


@check("divergence_kit")
def clique_partial_matches_gaussian_kl():
    worst = 0.0
    for m in range(1, 11):
        for a in (0.1, 1.0, 10.0):
            cov = models.clique_covariance_closed_form(m, a)
            for mt in range(1, m + 1):
                sub = cov[:mt, :mt]
                d_formula = divergence.clique_partial_divergence(m, mt, a)
                d_matrix = divergence.kl_gaussian(sub, np.eye(mt))
                worst = max(worst, abs(d_formula - d_matrix))
    return worst < 1e-10, 1e-10 - worst


@check("divergence_kit")
def subgraph_monotonicity():
    rng = np.random.default_rng(8)
    worst = math.inf
    for _ in range(100):
        d = int(rng.integers(1, 10))
        lam = float(rng.uniform(0.05, 2.0))
        spec = EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, d + 1, m=d + 1)
        base = graphs.base_graph(spec)
        g = graphs.enumerate_ensemble(spec)[0]
        full = divergence.partial_divergence_ising(g, base, lam, (1,) * (d + 1))
        z = tuple(int(v) for v in (rng.random(d + 1) < 0.5))
        part = divergence.partial_divergence_ising(g, base, lam, z)
        worst = min(worst, full - part)
    return worst >= -1e-12, worst


@check("divergence_kit")
def weakening_inequality():
    grid = np.geomspace(0.01, 100, 1000)
    worst = min(divergence.weakening_gap(float(b)) for b in grid)
    return worst >= 0, worst


@check("divergence_kit")
def f_beta_increasing():
    grid = np.linspace(1e-6, 1 - 1e-6, 1000)
    vals = [divergence.f_beta(float(b)) for b in grid]
    worst = min(b - a for a, b in zip(vals, vals[1:]))
    return worst > 0, worst


@check("divergence_kit")
def greedy_is_optimal():
    rng = np.random.default_rng(9)
    tested = 0
    while tested < 200:
        m = int(rng.integers(2, 7))
        L = int(rng.integers(1, 6))
        n = int(rng.integers(0, m * L + 1))
        if divergence.count_allocations((m,) * L, n) > 10**6:
            continue
        a = float(10 ** rng.uniform(-1, 1))
        spec = EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, m * L, m=m)
        wc = divergence.worst_case_partial_divergence(spec, a, n)
        brute, _ = divergence.exhaustive_max_allocation((m,) * L, n, a)
        if wc.exact_max != brute or wc.exact_max > wc.paper_bound:
            return False, -abs(wc.exact_max - brute)
        tested += 1
    return True, 0.0


@check("divergence_kit")
def additivity_over_components():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(30):
        g1, g2 = _random_graph(5, rng), _random_graph(5, rng)
        h1, h2 = _random_graph(4, rng), _random_graph(4, rng)
        lam = models.IsingParams(float(rng.uniform(0.1, 2)))
        joint_a = Graph(9, g1.edges + tuple((i + 5, j + 5) for i, j in h1.edges))
        joint_b = Graph(9, g2.edges + tuple((i + 5, j + 5) for i, j in h2.edges))
        whole = divergence.kl_discrete(models.ising_table(joint_a, lam), models.ising_table(joint_b, lam))
        parts = divergence.kl_discrete(models.ising_table(g1, lam), models.ising_table(g2, lam)) + divergence.kl_discrete(
            models.ising_table(h1, lam), models.ising_table(h2, lam)
        )
        worst = max(worst, abs(whole - parts))
        # Gaussian: block-diagonal covariances
        s1, s0 = _random_spd(3, rng), _random_spd(3, rng)
        t1, t0 = _random_spd(2, rng), _random_spd(2, rng)
        whole_g = divergence.kl_gaussian(_blockdiag(s1, t1), _blockdiag(s0, t0))
        worst = max(worst, abs(whole_g - divergence.kl_gaussian(s1, s0) - divergence.kl_gaussian(t1, t0)))
    return worst < 1e-10, 1e-10 - worst


def _random_spd(k, rng):
    a = rng.normal(size=(k, k))
    return a @ a.T + k * np.eye(k)


def _blockdiag(a, b):
    out = np.zeros((a.shape[0] + b.shape[0],) * 2)
    out[: a.shape[0], : a.shape[0]] = a
    out[a.shape[0]:, a.shape[0]:] = b
    return out


@check("divergence_kit")
def divergences_nonnegative():
    rng = np.random.default_rng(12)
    worst = math.inf
    for _ in range(100):
        p = int(rng.integers(1, 8))
        lam = models.IsingParams(float(rng.uniform(0.1, 3)))
        worst = min(worst, divergence.kl_discrete(models.ising_table(_random_graph(p, rng), lam), models.ising_table(_random_graph(p, rng), lam)))
        k = int(rng.integers(1, 5))
        worst = min(worst, divergence.kl_gaussian(_random_spd(k, rng), _random_spd(k, rng)))
    for lam in np.linspace(0, 5, 51):
        worst = min(worst, divergence.edge_divergence_ising(float(lam)).exact)
    return worst >= -1e-12, worst


@check("divergence_kit")
def clique_minus_one_bound_holds():
    worst = math.inf
    for d in range(1, 12):
        for lam in np.linspace(1 / d, 4, 25):
            r = divergence.clique_minus_one_exact(d, float(lam))
            worst = min(worst, (divergence.clique_minus_one_closed_bound(d, float(lam)) - r) / divergence.clique_minus_one_closed_bound(d, float(lam)))
    return worst > 0, worst


# ---------------------------------------------------------------------------
# fano_bounds


def _all_masks(p):
    return [z for z in itertools.product((0, 1), repeat=p)]


@check("fano_bounds")
def exact_mi_below_budgets():
    worst = math.inf
    for p, lam in ((4, 0.5), (4, 1.0), (6, 1.0), (5, 2.0)):
        spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, p)
        params = models.IsingParams(lam)
        for z in _all_masks(p):
            mi = fano.exact_conditional_mi(spec, params, z)
            k = sum(z)
            worst = min(worst, k * math.log(2) - mi, fano.mi_budget(spec, params, k) - mi)
    spec = EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 8, m=4)
    params = models.IsingParams(0.6)
    for z in _all_masks(8)[::7]:
        mi = fano.exact_conditional_mi(spec, params, z)
        # per-round bound: 4 lam d e^lam / e^{lam d} regardless of z
        worst = min(worst, divergence.clique_minus_one_closed_bound(3, 0.6) - mi)
    return worst >= -1e-12, worst


@check("fano_bounds")
def bound_terms_monotone_in_p():
    worst = math.inf
    for d, lam, tau in ((2, 0.6, 0.3), (4, 0.5, 0.5), (8, 0.2, 0.7)):
        prev_i = prev_g = None
        for p in range(20, 401, 7):
            ri = [t.value for t in fano.theorem_ising_bound(p, d, lam, 0.1).terms]
            rg = [t.value for t in fano.theorem_gaussian_bound(p, d, tau, 0.1).terms]
            if prev_i is not None:
                worst = min(worst, *(b - a for a, b in zip(prev_i, ri)), *(b - a for a, b in zip(prev_g, rg)))
            prev_i, prev_g = ri, rg
    return worst >= 0, worst


@check("fano_bounds")
def term2_exponential_growth():
    worst = 0.0
    p = 10_000
    for lam in (0.5, 1.0):
        for d in range(2, 12):
            if lam * d < 1:
                continue
            for step in (1, 2):
                a = fano.theorem_ising_bound(p, d, lam, 0.1).term("clique_minus_one").value
                b = fano.theorem_ising_bound(p, d + step, lam, 0.1).term("clique_minus_one").value
                lower_order = (math.log(p * (d + step)) / math.log(p * d)) * (d / (d + step))
                worst = max(worst, abs(b / a / (math.exp(lam * step) * lower_order) - 1))
    return worst < 0.01, 0.01 - worst


@check("fano_bounds")
def floor_monotonicity():
    worst = math.inf
    for log_t in (math.log(3), math.log(105), 10.0):
        floors = [fano.fano_error_floor(log_t, b).implied_error_floor for b in np.linspace(0, 2 * log_t, 50)]
        worst = min(worst, *(a - b for a, b in zip(floors, floors[1:])))
    for mi in (0.0, 0.5, 2.0):
        logs = [l for l in np.linspace(0.1, 20, 60) if mi < l - math.log(2)]
        floors = [fano.fano_error_floor(l, mi).implied_error_floor for l in logs]
        worst = min(worst, *(b - a for a, b in zip(floors, floors[1:])))
    return worst >= 0, worst


@check("fano_bounds")
def fano_end_to_end():
    """Empirical ML error never falls below the exact-information floor."""
    worst = math.inf
    for p, lam in ((4, 0.5), (4, 1.0), (6, 1.0)):
        spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, p)
        cfg = harness.ExperimentConfig(
            spec, lam=lam, strategy="passive", strategy_params={"block": 2}, budgets=(0, 4, 12), trials=3000, seed=1
        )
        for row in harness.run_experiment(cfg).rows:
            worst = min(worst, row.avg_error - (row.fano_floor - 3 * row.stderr))
    return worst >= 0, worst


# ---------------------------------------------------------------------------
# active_protocol


@check("active_protocol")
def budget_and_masking():
    rng = np.random.default_rng(13)
    spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 6)
    fam = graphs.enumerate_ensemble(spec)
    for model_params in (models.IsingParams(1.0), models.GaussianParams(0.4)):
        dec = protocol.FamilyDecoder(fam, model_params, protocol.dependence_decode)
        for _ in range(500):
            budget = int(rng.integers(0, 20))
            res = protocol.run_session(fam[int(rng.integers(len(fam)))], model_params, protocol.RandomSubsets(6), dec, budget, rng)
            if res.transcript.used > budget:
                return False, -1.0
            for q, o in res.transcript.rounds:
                if any((x is models.MISSING) != (zi == 0) for zi, x in zip(q.mask, o.values)):
                    return False, -1.0
    return True, 0.0


@check("active_protocol")
def reproducible_sessions():
    spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 6)
    fam = graphs.enumerate_ensemble(spec)
    params = models.IsingParams(1.0)
    dec = protocol.FamilyDecoder(fam, params)
    for strat in (protocol.PassiveRoundRobin(6, 2), protocol.AdaptivePairProbe(6, 0.4)):
        a = protocol.run_session(fam[3], params, strat, dec, 24, np.random.default_rng(5))
        b = protocol.run_session(fam[3], params, strat, dec, 24, np.random.default_rng(5))
        if a.transcript.to_jsonl() != b.transcript.to_jsonl() or a.g_hat != b.g_hat:
            return False, -1.0
    return True, 0.0


@check("active_protocol")
def ml_beats_other_decoders():
    spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 4)
    worst = math.inf
    for strategy, sp in (("passive", {}), ("adaptive", {"fraction": 0.5})):
        errs = {}
        for dec in ("ml", "dependence"):
            cfg = harness.ExperimentConfig(spec, lam=0.5, strategy=strategy, strategy_params=sp, decoder=dec, budgets=(8,), trials=3000, seed=2)
            errs[dec] = harness.run_experiment(cfg).rows[0]
        ml, other = errs["ml"], errs["dependence"]
        worst = min(worst, other.avg_error + 3 * ml.stderr - ml.avg_error)
        # minimax error dominates the average error
        worst = min(worst, ml.minimax_error - ml.avg_error, other.minimax_error - other.avg_error)
    return worst >= 0, worst


# ---------------------------------------------------------------------------
# experiment_harness


@check("experiment_harness")
def deterministic_output():
    spec = EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 4)
    cfg = harness.ExperimentConfig(spec, lam=2.0, budgets=(0, 8), trials=200, seed=9)
    a = harness.render_report(harness.run_experiment(cfg, workers=1), "json")
    b = harness.render_report(harness.run_experiment(cfg, workers=1), "json")
    return a == b, 0.0 if a == b else -1.0


@check("experiment_harness")
def zero_budget_error():
    worst = math.inf
    specs = [
        (EnsembleSpec(EnsembleKind.ISOLATED_EDGES, 4), {"lam": 1.0}),
        (EnsembleSpec(EnsembleKind.CLIQUE_MINUS_ONE, 6, m=3), {"lam": 1.0}),
        (EnsembleSpec(EnsembleKind.DISJOINT_CLIQUES, 6, m=3), {"model": "gaussian", "tau": 0.5, "construction": "CliqueForm"}),
    ]
    for spec, kw in specs:
        cfg = harness.ExperimentConfig(spec, budgets=(0,), trials=600, seed=3, **kw)
        row = harness.run_experiment(cfg).rows[0]
        expected = 1 - 1 / row_family_size(spec)
        se = math.sqrt(expected * (1 - expected) / cfg.trials)
        worst = min(worst, 3 * se - abs(row.avg_error - expected))
    return worst >= 0, worst


def row_family_size(spec):
    return len(graphs.enumerate_ensemble(spec))


# ---------------------------------------------------------------------------


def verify_invariants(scope: str = "all") -> list[CheckResult]:
    """Run every registered check in ``scope`` (a module name or "all")."""
    if scope != "all" and scope not in CHECKS:
        raise KeyError(f"unknown scope {scope!r}; choose from {['all', *CHECKS]}")
    modules = list(CHECKS) if scope == "all" else [scope]
    out = []
    for mod in modules:
        for name, fn in CHECKS[mod]:
            start = time.perf_counter()
            try:
                passed, margin = fn()
                detail = ""
            except Exception as exc:  # a crashing check is a failed check
                passed, margin, detail = False, float("nan"), f"{type(exc).__name__}: {exc}"
            out.append(CheckResult(name, mod, bool(passed), float(margin), time.perf_counter() - start, detail))
    return out


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.module}.{r.name}  margin={r.margin:.3g}  {r.runtime:.2f}s {r.detail}".rstrip())
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
