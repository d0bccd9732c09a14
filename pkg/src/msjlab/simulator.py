"""Event-driven simulation of a ``k``-server multiserver-job system.

The loop keeps the state ``(n, u, z)`` of :class:`~msjlab.state.SimState`,
processes completion, policy-timer and arrival events in time order (in
that order on exact ties), and asks the policy for admissions after every
event.  Completion times are fixed at admission from pre-drawn sizes, so
two runs on the same job stream are coupled exactly.
"""
from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from msjlab.errors import ConfigurationError
from msjlab.policy import Policy, PolicyConfig, make_policy
from msjlab.state import PhaseState, SimState
from msjlab.workload import JobStream, WorkloadSpec, generate_arrivals

__all__ = ["EventLog", "PhaseRecord", "PhaseStats", "SimState", "PhaseState", "run",
           "couple", "measure_phase_stats", "CoupledComparison"]


@dataclass(frozen=True)
class PhaseRecord:
    tag: str
    entry: float
    exit: float
    n_entry: tuple[int, ...]

    @property
    def duration(self) -> float:
        return self.exit - self.entry


@dataclass(eq=False)
class EventLog:
    """Per-job and per-phase measurements of one run.

    Job arrays are indexed by job id.  ``start`` and ``completion`` are NaN
    for jobs not started or not finished by the horizon.  ``busy_time`` is
    the integral of occupied servers over ``[0, horizon]``.
    """

    spec: WorkloadSpec
    policy: PolicyConfig
    horizon: float
    warmup: float
    seed: int
    arrival: np.ndarray
    size: np.ndarray
    class_index: np.ndarray
    start: np.ndarray
    completion: np.ndarray
    phases: list[PhaseRecord]
    busy_time: float
    series_t: np.ndarray | None = None
    series_n: np.ndarray | None = None
    n_area: np.ndarray = field(default=None)

    @property
    def needs(self) -> np.ndarray:
        return np.asarray(self.spec.needs)[self.class_index]

    @property
    def response(self) -> np.ndarray:
        return self.completion - self.arrival

    def measured(self) -> np.ndarray:
        """Mask of jobs arriving after warmup and completing by the horizon."""
        return (self.arrival >= self.warmup) & np.isfinite(self.completion)

    def time_average_n(self) -> np.ndarray:
        """Per-class time-average number in system over ``[0, horizon]``."""
        return self.n_area / self.horizon

    def served_work(self) -> float:
        """Server-time delivered by the horizon, from the job records."""
        started = np.isfinite(self.start)
        end = np.where(np.isfinite(self.completion), self.completion, self.horizon)
        return float(np.sum((self.needs * (end - self.start))[started]))

    def phase_tags(self) -> list[str]:
        return [p.tag for p in self.phases]

    def to_csv(self, directory, series: bool = True, jobs: bool = True) -> dict[str, Path]:
        """Write ``jobs.csv``, ``phases.csv`` and (if sampled) ``series.csv``.

        Floats are written with ``repr`` so they read back bit-for-bit.
        """
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        if jobs:
            paths["jobs"] = out / "jobs.csv"
            needs = self.needs
            with open(paths["jobs"], "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["id", "class", "arrival", "start", "completion"])
                for i in range(len(self.arrival)):
                    w.writerow([i, int(needs[i]), repr(float(self.arrival[i])),
                                repr(float(self.start[i])), repr(float(self.completion[i]))])
        paths["phases"] = out / "phases.csv"
        with open(paths["phases"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase", "entry", "exit"] + [f"n_{n}" for n in self.spec.needs])
            for p in self.phases:
                w.writerow([p.tag, repr(p.entry), repr(p.exit), *p.n_entry])
        if series and self.series_t is not None:
            paths["series"] = out / "series.csv"
            with open(paths["series"], "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t"] + [f"n_{n}" for n in self.spec.needs])
                for t, row in zip(self.series_t, self.series_n):
                    w.writerow([repr(float(t)), *(int(x) for x in row)])
        return paths


def read_jobs_csv(path) -> dict[str, np.ndarray]:
    """Load a ``jobs.csv`` export back into arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "id": np.array([int(r["id"]) for r in rows], dtype=np.int64),
        "class": np.array([int(r["class"]) for r in rows], dtype=np.int64),
        "arrival": np.array([float(r["arrival"]) for r in rows]),
        "start": np.array([float(r["start"]) for r in rows]),
        "completion": np.array([float(r["completion"]) for r in rows]),
    }


def _tag(z) -> str:
    return z if isinstance(z, str) else str(z[-1])


def run(spec: WorkloadSpec, policy: PolicyConfig | str, horizon: float,
        warmup: float | None = None, seed: int = 0, *, jobs: JobStream | None = None,
        record_series: bool = False, series_every: int = 1) -> EventLog:
    """Simulate ``policy`` on ``spec`` up to time ``horizon``.

    Parameters
    ----------
    warmup : float, optional
        Jobs arriving earlier are excluded from aggregates; defaults to 10%
        of the horizon.
    jobs : JobStream, optional
        Pre-generated stream (for coupling); drawn from ``seed`` otherwise.
    record_series : bool
        Record ``n(t)`` at every change, keeping every ``series_every``-th
        sample.
    """
    if isinstance(policy, str):
        policy = PolicyConfig.parse(policy)
    if warmup is None:
        warmup = 0.1 * horizon
    if not (horizon > warmup >= 0):
        raise ConfigurationError(f"need horizon > warmup >= 0, got {horizon}, {warmup}")
    if jobs is None:
        jobs = generate_arrivals(spec, horizon, seed)
    elif jobs.spec != spec:
        raise ConfigurationError("job stream was generated for a different workload")
    impl: Policy = make_policy(policy, spec, seed)

    needs = spec.needs
    k = spec.k
    arrivals = jobs.arrival.tolist()
    sizes = jobs.size.tolist()
    cls = jobs.class_index.tolist()
    njobs = len(arrivals)
    start = [math.nan] * njobs
    completion = [math.nan] * njobs

    st = SimState.empty(k, needs, impl.initial_phase())
    n, u, queues, running = st.n, st.u, st.queues, st.running
    heap: list[tuple[float, int]] = []
    nclass = len(needs)

    phases: list[PhaseRecord] = []
    phase_open = (_tag(st.phase.z), 0.0, tuple(n)) if impl.phased else None
    series_t, series_n = ([0.0], [tuple(n)]) if record_series else (None, None)
    changes = 0
    busy_time = 0.0
    n_area = [0.0] * nclass
    last_t = 0.0
    nxt = 0
    inf = math.inf
    decide = impl.decide

    while True:
        t_arr = arrivals[nxt] if nxt < njobs else inf
        t_done = heap[0][0] if heap else inf
        timer = st.phase.timer
        t_timer = timer if timer is not None else inf
        if t_done <= t_timer and t_done <= t_arr:
            t = t_done
            kind = 0
        elif t_timer <= t_arr:
            t = t_timer
            kind = 1
        else:
            t = t_arr
            kind = 2
        if t > horizon:
            break
        dt = t - last_t
        if dt > 0.0:
            busy_time += (k - st.free) * dt
            for i in range(nclass):
                n_area[i] += n[i] * dt
            last_t = t
        st.clock = t
        if kind == 0:
            _, j = heapq.heappop(heap)
            c = cls[j]
            completion[j] = t
            del running[j]
            n[c] -= 1
            u[c] -= 1
            st.free += needs[c]
        elif kind == 2:
            j = nxt
            nxt += 1
            c = cls[j]
            queues[c].append(j)
            n[c] += 1
        out = decide(st)
        if out is not None:
            for z in out.visited:
                tag, entry, n_entry = phase_open
                phases.append(PhaseRecord(tag, entry, t, n_entry))
                phase_open = (_tag(z), t, tuple(n))
            st.phase = out.phase
            admit = out.admit
            for c in range(nclass):
                a = admit[c]
                if a:
                    q = queues[c]
                    for _ in range(a):
                        j = q.popleft()
                        start[j] = t
                        done = t + sizes[j]
                        running[j] = done
                        heapq.heappush(heap, (done, j))
                    u[c] += a
                    st.free -= a * needs[c]
            if st.free < 0:
                raise RuntimeError(f"policy {policy.label} overfilled the servers at t={t}")
        if record_series and kind != 1:
            changes += 1
            if changes % series_every == 0:
                series_t.append(t)
                series_n.append(tuple(n))

    dt = horizon - last_t
    busy_time += (k - st.free) * dt
    for i in range(nclass):
        n_area[i] += n[i] * dt
    if phase_open is not None:
        tag, entry, n_entry = phase_open
        phases.append(PhaseRecord(tag, entry, horizon, n_entry))

    return EventLog(
        spec=spec, policy=policy, horizon=float(horizon), warmup=float(warmup), seed=int(seed),
        arrival=jobs.arrival, size=jobs.size, class_index=jobs.class_index,
        start=np.array(start), completion=np.array(completion), phases=phases,
        busy_time=busy_time,
        series_t=np.array(series_t) if record_series else None,
        series_n=np.array(series_n, dtype=np.int64) if record_series else None,
        n_area=np.array(n_area),
    )


@dataclass(frozen=True)
class PhaseStats:
    """Empirical phase statistics over completed cycles after warmup.

    ``n_entry`` is the mean per-class population at phase entry.
    """

    tag: str
    count: int
    mean: float
    second: float
    fraction: float
    n_entry: tuple[float, ...]


def measure_phase_stats(log: EventLog, *, cycle_start: str | None = None) -> dict[str, PhaseStats]:
    """Per-phase duration moments, time fractions and entry populations.

    Only whole cycles are used: records from the first entry into
    ``cycle_start`` after warmup up to the last such entry.  For MSF and
    MSFQ the cycle starts at ``P1``; otherwise at the first recorded tag.

    Raises
    ------
    ValueError
        If the log holds no phase records or no complete cycle.
    """
    recs = log.phases
    if not recs:
        raise ValueError("log has no phase records")
    if cycle_start is None:
        tags = {r.tag for r in recs}
        cycle_start = "P1" if "P1" in tags else recs[0].tag
    starts = [i for i, r in enumerate(recs) if r.tag == cycle_start and r.entry >= log.warmup]
    if len(starts) < 2:
        raise ValueError("no complete cycle after warmup")
    window = recs[starts[0]:starts[-1]]
    total = math.fsum(r.duration for r in window)
    groups: dict[str, list[PhaseRecord]] = {}
    for r in window:
        groups.setdefault(r.tag, []).append(r)
    out = {}
    for tag, rs in groups.items():
        d = np.array([r.duration for r in rs])
        out[tag] = PhaseStats(
            tag=tag, count=len(rs), mean=float(d.mean()), second=float(np.mean(d * d)),
            fraction=float(d.sum() / total) if total > 0 else math.nan,
            n_entry=tuple(np.mean([r.n_entry for r in rs], axis=0).tolist()),
        )
    return out


def cycle_count(log: EventLog, cycle_start: str = "P1") -> int:
    return sum(1 for r in log.phases if r.tag == cycle_start and r.entry >= log.warmup)


def assumption_violations(log: EventLog) -> dict[str, float]:
    """How often a one-or-all cycle starts without the populations the
    analytic approximation takes for granted: no large job at phase 1 entry,
    or fewer than ``k`` small jobs at phase 2 entry."""
    spec = log.spec
    small, large = spec.index_of(1), spec.index_of(spec.k)
    p1 = [r for r in log.phases if r.tag == "P1" and r.entry >= log.warmup]
    p2 = [r for r in log.phases if r.tag == "P2" and r.entry >= log.warmup]
    out = {}
    if p1 and large is not None:
        out["P1_no_large"] = sum(r.n_entry[large] == 0 for r in p1) / len(p1)
    if p2 and small is not None:
        out["P2_under_k_small"] = sum(r.n_entry[small] < spec.k for r in p2) / len(p2)
    return out


@dataclass(frozen=True)
class CoupledComparison:
    """Paired outcome of two runs on one job stream."""

    a: EventLog
    b: EventLog
    mean_response_a: float
    mean_response_b: float

    @property
    def difference(self) -> float:
        return self.mean_response_a - self.mean_response_b

    @property
    def identical(self) -> bool:
        """Bit-identical job records and phase logs."""
        same_jobs = (np.array_equal(self.a.start, self.b.start, equal_nan=True)
                     and np.array_equal(self.a.completion, self.b.completion, equal_nan=True))
        return same_jobs and self.a.phases == self.b.phases


def couple(spec: WorkloadSpec, policy_a, policy_b, horizon: float, warmup: float | None = None,
           seed: int = 0, **kwargs) -> CoupledComparison:
    """Run two policies on the same job stream."""
    jobs = generate_arrivals(spec, horizon, seed)
    a = run(spec, policy_a, horizon, warmup, seed, jobs=jobs, **kwargs)
    b = run(spec, policy_b, horizon, warmup, seed, jobs=jobs, **kwargs)

    def mean(log):
        m = log.measured()
        return float(np.mean(log.response[m])) if m.any() else math.nan

    return CoupledComparison(a, b, mean(a), mean(b))


def write_run_metadata(log: EventLog, path) -> None:
    doc = {"workload": log.spec.to_dict(), "policy": log.policy.to_dict(),
           "horizon": log.horizon, "warmup": log.warmup, "seed": log.seed,
           "jobs": int(len(log.arrival)), "busy_time": log.busy_time}
    Path(path).write_text(json.dumps(doc, indent=2))
