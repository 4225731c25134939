"""Config-driven Monte Carlo experiments and bound-vs-empirical tables."""
from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .fano import exact_conditional_mi, fano_error_floor, mi_budget, per_node_capacity
from .graphs import EnsembleSpec, enumerate_ensemble, log_cardinality, sample_graph
from .models import Construction, GaussianParams, IsingParams
from .protocol import (
    AdaptivePairProbe,
    FamilyDecoder,
    FixedSchedule,
    PassiveRoundRobin,
    dependence_decode,
    ml_decode,
    run_session,
)

CSV_COLUMNS = ("budget", "avg_error", "stderr", "minimax_error", "fano_floor", "thm_bound")

DECODERS = {"ml": ml_decode, "dependence": dependence_decode}
STRATEGIES = ("passive", "fixed", "adaptive")
NON_ADAPTIVE = ("passive", "fixed")


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSpec
    model: str = "ising"
    lam: float | None = None
    tau: float | None = None
    construction: str = "EdgeForm"
    strategy: str = "passive"
    strategy_params: dict = field(default_factory=dict)
    decoder: str = "ml"
    budgets: tuple[int, ...] = (0,)
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(b < 0 for b in self.budgets) or list(self.budgets) != sorted(self.budgets):
            raise ValueError("budgets must be non-negative and sorted")
        if self.model not in ("ising", "gaussian"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}; choose from {tuple(DECODERS)}")
        self.params  # validates lam / tau

    @property
    def params(self):
        if self.model == "ising":
            if self.lam is None:
                raise ValueError("ising model needs lam")
            return IsingParams(float(self.lam))
        if self.tau is None:
            raise ValueError("gaussian model needs tau")
        return GaussianParams(float(self.tau), Construction(self.construction))

    def make_strategy(self):
        p = self.ensemble.p
        sp = self.strategy_params
        if self.strategy == "passive":
            return PassiveRoundRobin(p, sp.get("block"))
        if self.strategy == "fixed":
            return FixedSchedule(p, tuple(tuple(s) for s in sp["node_sets"]))
        return AdaptivePairProbe(p, sp.get("fraction", 0.5), sp.get("n_candidates"))

    def to_json(self) -> dict:
        out = asdict(self)
        out["ensemble"] = self.ensemble.to_json()
        out["budgets"] = list(self.budgets)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        obj["ensemble"] = EnsembleSpec.from_json(obj["ensemble"])
        obj.pop("output", None)
        obj.pop("format", None)
        return cls(**obj)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ResultRow:
    budget: int
    avg_error: float
    stderr: float
    minimax_error: float
    fano_floor: float | None
    thm_bound: float | None


@dataclass
class ResultTable:
    rows: list[ResultRow]
    metadata: dict

    def to_json(self) -> dict:
        return {
            "metadata": self.metadata,
            "rows": [{k: _round12(v) for k, v in asdict(r).items()} for r in self.rows],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ResultTable":
        return cls([ResultRow(**r) for r in obj["rows"]], obj["metadata"])


def _round12(v):
    if isinstance(v, float):
        return float(f"{v:.12g}")
    return v


def trial_rng(seed: int, budget: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(budget, trial)))


@functools.lru_cache(maxsize=32)
def _family(spec: EnsembleSpec):
    return tuple(enumerate_ensemble(spec))


def _run_trials(config: ExperimentConfig, budget: int, trials: range) -> list[tuple[int, int, bool]]:
    family = _family(config.ensemble)
    index = {g: i for i, g in enumerate(family)}
    params = config.params
    strategy = config.make_strategy()
    decoder = FamilyDecoder(family, params, DECODERS[config.decoder])
    stratified = len(family) <= config.trials
    out = []
    for t in trials:
        rng = trial_rng(config.seed, budget, t)
        if stratified:
            hidden = family[t % len(family)]
        else:
            hidden = sample_graph(config.ensemble, rng, list(family))
        res = run_session(hidden, params, strategy, decoder, budget, rng)
        out.append((t, index[hidden], res.g_hat != hidden))
    return out


def _chunks(n: int, k: int) -> list[range]:
    k = max(1, min(k, n))
    step = math.ceil(n / k)
    return [range(s, min(s + step, n)) for s in range(0, n, step)]


def _fano_floor(config: ExperimentConfig, budget: int, log_t: float) -> float | None:
    """Exact-information Fano floor, or None when not computable."""
    params = config.params
    if not isinstance(params, IsingParams) or log_t <= 0:
        return None
    try:
        if config.strategy in NON_ADAPTIVE:
            total = 0.0
            for q in config.make_strategy().schedule(budget):
                total += _mi_cached(config.ensemble, params, q.mask)
        else:
            total = budget * _per_node_capacity_cached(config.ensemble, params)
    except (ValueError, TypeError):
        return None
    return fano_error_floor(log_t, total).implied_error_floor


@functools.lru_cache(maxsize=4096)
def _mi_cached(spec, params, mask):
    return exact_conditional_mi(spec, params, mask)


# per-node capacity enumerates all 2^p masks
MAX_P_CAPACITY = 10


@functools.lru_cache(maxsize=64)
def _per_node_capacity_cached(spec, params):
    if spec.p > MAX_P_CAPACITY:
        raise ValueError("too many nodes for the capacity bound")
    return per_node_capacity(spec, params)


def _thm_bound(config: ExperimentConfig, budget: int, log_t: float) -> float | None:
    if log_t <= 0:
        return None
    try:
        budget_mi = mi_budget(config.ensemble, config.params, budget)
    except (ValueError, TypeError):
        return None
    return fano_error_floor(log_t, budget_mi).implied_error_floor


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Simulate every budget point; results depend only on (config, seed).

    Hidden graphs cycle through the family when it has at most ``trials``
    members (stratified), and are drawn uniformly otherwise.
    """
    family = _family(config.ensemble)
    log_t = log_cardinality(config.ensemble).best
    rows = []
    for budget in config.budgets:
        chunks = _chunks(config.trials, workers)
        if workers > 1 and len(chunks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_run_trials, [config] * len(chunks), [budget] * len(chunks), chunks))
        else:
            parts = [_run_trials(config, budget, c) for c in chunks]
        results = sorted((r for part in parts for r in part), key=lambda r: r[0])
        errors = np.array([e for _, _, e in results], dtype=float)
        avg = float(errors.mean())
        per_graph_err = np.zeros(len(family))
        per_graph_n = np.zeros(len(family))
        for _, gi, e in results:
            per_graph_n[gi] += 1
            per_graph_err[gi] += e
        seen = per_graph_n > 0
        minimax = float((per_graph_err[seen] / per_graph_n[seen]).max())
        rows.append(
            ResultRow(
                budget,
                avg,
                math.sqrt(avg * (1 - avg) / config.trials),
                minimax,
                _fano_floor(config, budget, log_t),
                _thm_bound(config, budget, log_t),
            )
        )
    metadata = {
        "config_hash": config.digest(),
        "config": config.to_json(),
        "seed": config.seed,
        "version": __version__,
        "family_size": len(family),
        "log_family_size": log_t,
        "stratified": len(family) <= config.trials,
        "fano_floor_method": (
            None
            if not isinstance(config.params, IsingParams)
            else ("exact_mi_schedule" if config.strategy in NON_ADAPTIVE else "per_node_capacity")
        ),
    }
    return ResultTable(rows, metadata)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def render_report(table: ResultTable, fmt: str = "csv", bits: bool = False) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in table.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        obj = table.to_json()
        if bits and obj["metadata"].get("log_family_size") is not None:
            obj["metadata"]["log_family_size_bits"] = _round12(obj["metadata"]["log_family_size"] / math.log(2))
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(table: ResultTable, fmt: str, path: str | Path | None = None, bits: bool = False) -> str:
    """Render the table as CSV or JSON and write it to ``path`` if given."""
    text = render_report(table, fmt, bits)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_table(path: str | Path) -> ResultTable:
    return ResultTable.from_json(json.loads(Path(path).read_text()))


def load_config(path: str | Path) -> tuple[ExperimentConfig, dict[str, Any]]:
    """Parse a JSON experiment config; returns the config and output options."""
    obj = json.loads(Path(path).read_text())
    out_opts = {k: obj[k] for k in ("output", "format") if k in obj}
    return ExperimentConfig.from_json(obj), out_opts
