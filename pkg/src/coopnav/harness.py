"""Experiment harness: error metrics over simulation runs, multi-seed
replication, and side-by-side comparison of algorithm combinations.

All metrics operate on the per-epoch position records produced by the
simulator. Errors are Euclidean distances between estimated and true
positions, optionally after a burn-in period that excludes the initial
convergence transient.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .config import ACRONYMS, ScenarioConfig
from .errors import InvalidArgumentError
from .simkernel import RunResult, run


def position_errors(result: RunResult, node_id: int | None = None,
                    burn_in_s: float | None = None) -> np.ndarray:
    """Per-record localization errors [m], optionally for one node only."""
    out = []
    for r in result.records:
        if node_id is not None and r.node_id != node_id:
            continue
        if burn_in_s is not None and r.time_s < burn_in_s:
            continue
        out.append(float(np.linalg.norm(r.est_pos - r.true_pos)))
    return np.array(out)


def rmse(errors) -> float:
    """Root-mean-square of the given errors."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise InvalidArgumentError("rmse requires at least one error sample")
    return float(np.sqrt(np.mean(errors * errors)))


def outage_probability(errors, e_th: float) -> float:
    """Fraction of errors strictly exceeding the threshold e_th."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise InvalidArgumentError("outage requires at least one error sample")
    return float(np.mean(errors > e_th))


def outage_threshold(errors, p_out: float) -> float:
    """Smallest e_th with outage probability <= p_out (error quantile).

    For p_out = 0.2 this is the 80th percentile of the error distribution.
    """
    errors = np.sort(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise InvalidArgumentError("outage threshold requires at least one sample")
    if not 0.0 <= p_out <= 1.0:
        raise InvalidArgumentError("outage probability must be in [0, 1]")
    # Outage of candidate errors[i] is (n - 1 - i) / n; pick the first index
    # where that is <= p_out.
    n = errors.size
    idx = int(np.ceil(n * (1.0 - p_out))) - 1
    idx = min(max(idx, 0), n - 1)
    return float(errors[idx])


def measurement_rate(result: RunResult) -> float:
    """Completed single range measurements per second over the run."""
    if result.duration_s <= 0:
        raise InvalidArgumentError("measurement rate requires a positive duration")
    return result.total_measurements() / result.duration_s


def percent_change(base: float, other: float) -> float:
    """Relative change of `other` versus `base`, in percent (negative = lower)."""
    if base == 0:
        raise InvalidArgumentError("percent change undefined for a zero baseline")
    return (other - base) / base * 100.0


@dataclass(frozen=True)
class MetricReport:
    """Metrics for one run (or one node within a run)."""

    scenario: str
    seed: int
    node_id: int | None
    n_samples: int
    rmse_m: float
    e_th_80_m: float  # error threshold at 20% outage
    meas_rate_hz: float
    activation_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(result: RunResult, node_id: int | None = None,
             burn_in_s: float | None = None) -> MetricReport:
    errors = position_errors(result, node_id=node_id, burn_in_s=burn_in_s)
    if errors.size == 0:
        raise InvalidArgumentError("no records to evaluate")
    recs = [
        r for r in result.records
        if (node_id is None or r.node_id == node_id)
        and (burn_in_s is None or r.time_s >= burn_in_s)
    ]
    activated = sum(r.activated for r in recs)
    return MetricReport(
        scenario=result.scenario,
        seed=result.seed,
        node_id=node_id,
        n_samples=int(errors.size),
        rmse_m=rmse(errors),
        e_th_80_m=outage_threshold(errors, 0.2),
        meas_rate_hz=measurement_rate(result),
        activation_fraction=activated / len(recs) if recs else 0.0,
    )


def _run_one(args) -> RunResult:
    scenario, seed = args
    return run(scenario, seed=seed)


def replicate(scenario: ScenarioConfig, seeds, node_id: int | None = None,
              workers: int | None = None, burn_in_s: float | None = None):
    """Run the scenario once per seed and evaluate each run.

    Results are returned ordered by the position in `seeds` regardless of
    worker completion order, so replication is deterministic.
    """
    seeds = list(seeds)
    if not seeds:
        raise InvalidArgumentError("replicate requires at least one seed")
    burn = scenario.parameters.metrics_burn_in_s if burn_in_s is None else burn_in_s
    if workers is not None and workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, [(scenario, s) for s in seeds]))
    else:
        results = [run(scenario, seed=s) for s in seeds]
    reports = [evaluate(r, node_id=node_id, burn_in_s=burn) for r in results]
    return results, reports


@dataclass(frozen=True)
class Comparison:
    """Aggregate comparison of one algorithm combination against a baseline."""

    scenario: str
    baseline: str
    candidate: str
    seeds: tuple
    baseline_rmse_m: float  # median across seeds
    candidate_rmse_m: float
    rmse_change_pct: float
    baseline_e_th_m: float
    candidate_e_th_m: float
    e_th_change_pct: float
    baseline_rate_hz: float
    candidate_rate_hz: float
    rate_change_pct: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def compare(scenario: ScenarioConfig, baseline_acronym: str, candidate_acronym: str,
            seeds, node_id: int | None = None, workers: int | None = None,
            burn_in_s: float | None = None) -> Comparison:
    """Run both algorithm combinations over the same seeds and compare medians."""
    for acr in (baseline_acronym, candidate_acronym):
        if acr not in ACRONYMS:
            raise InvalidArgumentError(f"unknown algorithm acronym {acr!r}")
    _, base_reports = replicate(
        scenario.with_algorithms(baseline_acronym), seeds, node_id=node_id,
        workers=workers, burn_in_s=burn_in_s,
    )
    _, cand_reports = replicate(
        scenario.with_algorithms(candidate_acronym), seeds, node_id=node_id,
        workers=workers, burn_in_s=burn_in_s,
    )
    b_rmse = float(np.median([r.rmse_m for r in base_reports]))
    c_rmse = float(np.median([r.rmse_m for r in cand_reports]))
    b_eth = float(np.median([r.e_th_80_m for r in base_reports]))
    c_eth = float(np.median([r.e_th_80_m for r in cand_reports]))
    b_rate = float(np.median([r.meas_rate_hz for r in base_reports]))
    c_rate = float(np.median([r.meas_rate_hz for r in cand_reports]))
    return Comparison(
        scenario=scenario.name,
        baseline=baseline_acronym,
        candidate=candidate_acronym,
        seeds=tuple(seeds),
        baseline_rmse_m=b_rmse,
        candidate_rmse_m=c_rmse,
        rmse_change_pct=percent_change(b_rmse, c_rmse),
        baseline_e_th_m=b_eth,
        candidate_e_th_m=c_eth,
        e_th_change_pct=percent_change(b_eth, c_eth),
        baseline_rate_hz=b_rate,
        candidate_rate_hz=c_rate,
        rate_change_pct=percent_change(b_rate, c_rate),
    )


def reports_csv(reports) -> str:
    """Seed-level metric reports as CSV text."""
    header = "scenario,seed,node_id,n_samples,rmse_m,e_th_80_m,meas_rate_hz,activation_fraction"
    lines = [header]
    for r in reports:
        lines.append(
            ",".join(
                [
                    r.scenario,
                    str(r.seed),
                    "" if r.node_id is None else str(r.node_id),
                    str(r.n_samples),
                    f"{r.rmse_m:.9f}",
                    f"{r.e_th_80_m:.9f}",
                    f"{r.meas_rate_hz:.9f}",
                    f"{r.activation_fraction:.9f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def summary_json(obj) -> str:
    """Stable JSON serialization for reports and comparisons."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    elif isinstance(obj, (list, tuple)):
        obj = [o.to_dict() if hasattr(o, "to_dict") else o for o in obj]
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
