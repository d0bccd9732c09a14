"""Response-time aggregates with batch-means confidence intervals."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import stats

from msjlab.workload import WorkloadSpec, load_share

BATCHES = 20


@dataclass(frozen=True)
class ClassStats:
    need: int
    count: int
    mean: float
    ci: float
    weight: float


@dataclass(frozen=True)
class ResponseStats:
    """Per-class and overall mean response times.

    ``mean`` is the plain average over measured jobs, which equals
    ``Σ p̂_j E[T^(j)]`` with empirical class fractions.  ``weighted`` uses
    the declared load shares ``ρ_j/ρ`` as weights, renormalized over classes
    that completed at least one job.
    """

    classes: tuple[ClassStats, ...]
    count: int
    mean: float
    ci: float
    weighted: float
    weighted_ci: float
    batches: int

    def by_need(self) -> dict[int, ClassStats]:
        return {c.need: c for c in self.classes}

    @property
    def weights(self) -> dict[int, float]:
        return {c.need: c.weight for c in self.classes}


def load_weights(spec: WorkloadSpec) -> dict[int, float]:
    """Load shares ``ρ_j/ρ``; all zero when the workload carries no load."""
    shares, total = load_share(spec)
    if total == 0.0:
        return {need: 0.0 for need in shares}
    return {need: r / total for need, r in shares.items()}


def _ci(values: np.ndarray, level: float) -> float:
    values = values[np.isfinite(values)]
    if len(values) < 2:
        return math.nan
    half = stats.t.ppf(0.5 + level / 2.0, len(values) - 1)
    return float(half * np.std(values, ddof=1) / math.sqrt(len(values)))


def aggregate_jobs(spec: WorkloadSpec, need: np.ndarray, arrival: np.ndarray,
                   completion: np.ndarray, warmup: float, horizon: float,
                   batches: int = BATCHES, level: float = 0.95) -> ResponseStats:
    """Aggregate raw job records (see :func:`aggregate`).

    Batches are equal windows of arrival time over ``[warmup, horizon]``.
    """
    need = np.asarray(need)
    arrival = np.asarray(arrival, dtype=float)
    completion = np.asarray(completion, dtype=float)
    keep = (arrival >= warmup) & np.isfinite(completion)
    resp = (completion - arrival)[keep]
    need, arrival = need[keep], arrival[keep]
    edges = np.linspace(warmup, horizon, batches + 1)
    batch = np.clip(np.searchsorted(edges, arrival, side="right") - 1, 0, batches - 1)

    weights = load_weights(spec)
    classes = []
    batch_class = {}
    for c in spec.classes:
        mask = need == c.need
        count = int(mask.sum())
        if count == 0:
            classes.append(ClassStats(c.need, 0, math.nan, math.nan, weights[c.need]))
            continue
        sums = np.bincount(batch[mask], weights=resp[mask], minlength=batches)
        counts = np.bincount(batch[mask], minlength=batches)
        with np.errstate(invalid="ignore", divide="ignore"):
            bmeans = sums / counts
        batch_class[c.need] = bmeans
        classes.append(ClassStats(c.need, count, float(np.mean(resp[mask])), _ci(bmeans, level),
                                  weights[c.need]))

    missing = [c.need for c in classes if c.count == 0 and c.weight > 0]
    if missing:
        warnings.warn(f"classes {missing} completed no jobs; dropped from the weighted mean",
                      RuntimeWarning, stacklevel=3)
    present = [c for c in classes if c.count > 0]
    wsum = math.fsum(c.weight for c in present)
    if wsum > 0:
        weighted = math.fsum(c.weight * c.mean for c in present) / wsum
        bweighted = sum(c.weight * batch_class[c.need] for c in present) / wsum
    else:
        weighted = float(np.mean(resp)) if len(resp) else math.nan
        bweighted = np.full(batches, math.nan)

    if len(resp):
        mean = math.fsum(c.count * c.mean for c in present) / len(resp)
        sums = np.bincount(batch, weights=resp, minlength=batches)
        counts = np.bincount(batch, minlength=batches)
        with np.errstate(invalid="ignore", divide="ignore"):
            ci = _ci(sums / counts, level)
    else:
        mean = ci = math.nan
    return ResponseStats(tuple(classes), int(len(resp)), mean, ci, weighted,
                         _ci(np.asarray(bweighted, dtype=float), level), batches)


def aggregate(log, spec: WorkloadSpec | None = None, warmup: float | None = None,
              batches: int = BATCHES, level: float = 0.95) -> ResponseStats:
    """Per-class, overall and load-weighted mean response time of a run.

    Parameters
    ----------
    log : EventLog
        Simulation output.
    spec, warmup : optional
        Default to the run's own workload and warmup.
    """
    spec = spec or log.spec
    warmup = log.warmup if warmup is None else warmup
    return aggregate_jobs(spec, log.needs, log.arrival, log.completion, warmup, log.horizon,
                          batches, level)


RESULT_FIELDS = ["policy", "lambda", "seed", "class", "mean_T", "ci", "weight", "count"]


def result_rows(stats_: ResponseStats, policy: str, lam: float, seed: int) -> list[dict]:
    rows = [{"policy": policy, "lambda": lam, "seed": seed, "class": c.need, "mean_T": c.mean,
             "ci": c.ci, "weight": c.weight, "count": c.count} for c in stats_.classes]
    rows.append({"policy": policy, "lambda": lam, "seed": seed, "class": "E[T]",
                 "mean_T": stats_.mean, "ci": stats_.ci, "weight": 1.0, "count": stats_.count})
    rows.append({"policy": policy, "lambda": lam, "seed": seed, "class": "E[T^w]",
                 "mean_T": stats_.weighted, "ci": stats_.weighted_ci, "weight": 1.0,
                 "count": stats_.count})
    return rows


def write_results(rows: Iterable[dict], path) -> Path:
    """Write ``results.csv`` rows (see :data:`RESULT_FIELDS`)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path
