"""Job classes, workloads, class-table files and Poisson job streams."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from msjlab.errors import ConfigurationError

# Substream tags inside a class's seed sequence.
_GAPS, _SIZES = 0, 1


@dataclass(frozen=True)
class ClassSpec:
    """One job class: its server need, Poisson arrival rate and mean size."""

    need: int
    arrival_rate: float
    mean_size: float

    def __post_init__(self):
        if int(self.need) != self.need or self.need < 1:
            raise ConfigurationError(f"server need must be a positive integer, got {self.need!r}")
        if not self.arrival_rate >= 0.0 or not math.isfinite(self.arrival_rate):
            raise ConfigurationError(f"arrival rate must be finite and >= 0, got {self.arrival_rate!r}")
        if not self.mean_size > 0.0 or not math.isfinite(self.mean_size):
            raise ConfigurationError(f"mean size must be finite and > 0, got {self.mean_size!r}")

    @property
    def service_rate(self) -> float:
        return 1.0 / self.mean_size


@dataclass(frozen=True)
class WorkloadSpec:
    """A ``k``-server system fed by independent Poisson classes.

    Classes are kept sorted by server need; that order is the class index
    used by the simulator.
    """

    k: int
    classes: tuple[ClassSpec, ...]

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"k must be a positive integer, got {self.k!r}")
        classes = tuple(sorted(self.classes, key=lambda c: c.need))
        if not classes:
            raise ConfigurationError("a workload needs at least one class")
        needs = [c.need for c in classes]
        if len(set(needs)) != len(needs):
            raise ConfigurationError(f"duplicate server needs in {needs}")
        if needs[-1] > self.k:
            raise ConfigurationError(f"server need {needs[-1]} exceeds k={self.k}")
        object.__setattr__(self, "classes", classes)

    @classmethod
    def from_fractions(cls, k: int, needs: Sequence[int], fractions: Sequence[float],
                       mean_sizes: Sequence[float] | float, total_rate: float) -> WorkloadSpec:
        if np.ndim(mean_sizes) == 0:
            mean_sizes = [float(mean_sizes)] * len(needs)
        if not (len(needs) == len(fractions) == len(mean_sizes)):
            raise ConfigurationError("needs, fractions and mean sizes differ in length")
        if any(f < 0 for f in fractions):
            raise ConfigurationError("fractions must be nonnegative")
        total = float(sum(fractions))
        if not math.isclose(total, 1.0, rel_tol=1e-9):
            raise ConfigurationError(f"fractions sum to {total}, not 1")
        if total_rate < 0:
            raise ConfigurationError("total arrival rate must be nonnegative")
        return cls(k, tuple(ClassSpec(int(n), total_rate * f / total, float(s))
                            for n, f, s in zip(needs, fractions, mean_sizes)))

    @classmethod
    def one_or_all(cls, k: int, total_rate: float, p_small: float,
                   mean_small: float = 1.0, mean_large: float = 1.0) -> WorkloadSpec:
        """Two classes needing 1 and ``k`` servers."""
        return cls.from_fractions(k, [1, k], [p_small, 1.0 - p_small],
                                  [mean_small, mean_large], total_rate)

    @property
    def needs(self) -> tuple[int, ...]:
        return tuple(c.need for c in self.classes)

    @property
    def rates(self) -> np.ndarray:
        return np.array([c.arrival_rate for c in self.classes])

    @property
    def mean_sizes(self) -> np.ndarray:
        return np.array([c.mean_size for c in self.classes])

    @property
    def total_rate(self) -> float:
        return float(math.fsum(c.arrival_rate for c in self.classes))

    @property
    def fractions(self) -> np.ndarray:
        lam = self.total_rate
        if lam == 0.0:
            return np.full(len(self.classes), np.nan)
        return self.rates / lam

    @property
    def is_one_or_all(self) -> bool:
        return self.k > 1 and set(self.needs) <= {1, self.k}

    def index_of(self, need: int) -> int | None:
        for i, c in enumerate(self.classes):
            if c.need == need:
                return i
        return None

    def scaled(self, total_rate: float) -> WorkloadSpec:
        """Same class fractions at a new total arrival rate."""
        if self.total_rate == 0.0:
            raise ConfigurationError("cannot rescale a workload with zero arrival rate")
        return WorkloadSpec.from_fractions(self.k, self.needs, list(self.fractions),
                                           list(self.mean_sizes), total_rate)

    def to_dict(self) -> dict:
        return {"k": self.k,
                "classes": [{"need": c.need, "rate": c.arrival_rate, "mean_size": c.mean_size}
                            for c in self.classes]}


@dataclass(frozen=True)
class Job:
    id: int
    class_need: int
    size: float
    arrival_time: float


@dataclass(frozen=True, eq=False)
class JobStream:
    """A merged, time-sorted job stream held as parallel arrays.

    Iterating yields :class:`Job` records; the simulator reads the arrays.
    """

    spec: WorkloadSpec
    horizon: float
    seed: int
    arrival: np.ndarray
    size: np.ndarray
    class_index: np.ndarray
    need: np.ndarray = field(init=False)

    def __post_init__(self):
        needs = np.array(self.spec.needs, dtype=np.int64)
        object.__setattr__(self, "need", needs[self.class_index])

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self.arrival))

    def __len__(self) -> int:
        return len(self.arrival)

    def __iter__(self) -> Iterator[Job]:
        for i in range(len(self.arrival)):
            yield Job(i, int(self.need[i]), float(self.size[i]), float(self.arrival[i]))


def class_generator(seed: int, need: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, need, stream)``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(need, stream))
    return np.random.Generator(np.random.Philox(ss))


def _arrival_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    if rate == 0.0:
        return np.empty(0)
    expected = rate * horizon
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)
    parts, last = [], 0.0
    while True:
        times = last + np.cumsum(rng.exponential(1.0 / rate, chunk))
        parts.append(times)
        last = times[-1]
        if last >= horizon:
            break
    times = np.concatenate(parts)
    return times[times < horizon]


def generate_arrivals(spec: WorkloadSpec, horizon: float, rng_seed: int) -> JobStream:
    """Sample every class's Poisson arrivals and exponential sizes up to ``horizon``.

    Each class draws from its own substreams keyed by its server need, so
    adding or removing a class leaves the other classes' jobs unchanged.
    """
    if not horizon > 0:
        raise ConfigurationError("horizon must be positive")
    arrivals, sizes, index = [], [], []
    for i, c in enumerate(spec.classes):
        t = _arrival_times(class_generator(rng_seed, c.need, _GAPS), c.arrival_rate, horizon)
        s = class_generator(rng_seed, c.need, _SIZES).exponential(c.mean_size, len(t))
        arrivals.append(t)
        sizes.append(s)
        index.append(np.full(len(t), i, dtype=np.int64))
    arrival = np.concatenate(arrivals)
    order = np.argsort(arrival, kind="stable")
    return JobStream(spec, float(horizon), int(rng_seed), arrival[order],
                     np.concatenate(sizes)[order], np.concatenate(index)[order])


def load_share(spec: WorkloadSpec) -> tuple[dict[int, float], float]:
    """Per-class load ``ρ_j = j λ_j / μ_j`` keyed by need, and the total."""
    per_class = {c.need: c.need * c.arrival_rate * c.mean_size for c in spec.classes}
    return per_class, float(math.fsum(per_class.values()))


def _rows_to_spec(k: int | None, rows: list[dict], total_rate: float | None, source) -> WorkloadSpec:
    if not rows:
        raise ConfigurationError(f"{source}: no job classes")
    has_rate = ["rate" in r and r["rate"] not in (None, "") for r in rows]
    has_frac = ["fraction" in r and r["fraction"] not in (None, "") for r in rows]
    if any(a and b for a, b in zip(has_rate, has_frac)) or (any(has_rate) and any(has_frac)):
        raise ConfigurationError(f"{source}: give either rates or fractions, not both")
    if not (all(has_rate) or all(has_frac)):
        raise ConfigurationError(f"{source}: every class needs a rate or a fraction")
    try:
        needs = [int(r["need"]) for r in rows]
        sizes = [float(r["mean_size"]) for r in rows]
        if k is None:
            k = max(needs)
        if all(has_rate):
            spec = WorkloadSpec(int(k), tuple(ClassSpec(n, float(r["rate"]), s)
                                              for n, r, s in zip(needs, rows, sizes)))
            return spec if total_rate is None else spec.scaled(total_rate)
        if total_rate is None:
            raise ConfigurationError(f"{source}: class fractions need a total arrival rate")
        return WorkloadSpec.from_fractions(int(k), needs, [float(r["fraction"]) for r in rows],
                                           sizes, float(total_rate))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{source}: malformed class row ({exc})") from exc


def workload_from_dict(doc: dict, total_rate: float | None = None, source="workload") -> WorkloadSpec:
    if not isinstance(doc, dict) or "classes" not in doc:
        raise ConfigurationError(f"{source}: expected an object with 'classes'")
    if total_rate is None:
        total_rate = doc.get("total_rate")
    return _rows_to_spec(doc.get("k"), list(doc["classes"]), total_rate, source)


def load_workload(path, format: str | None = None, total_rate: float | None = None,
                  k: int | None = None) -> WorkloadSpec:
    """Read a class table from JSON or CSV.

    JSON documents look like ``{"k": 32, "classes": [{"need": 1, "rate": 6.75,
    "mean_size": 1}, ...]}``; CSV files carry a ``need,rate,mean_size`` (or
    ``need,fraction,mean_size``) header.  Fraction tables are scaled by
    ``total_rate``; rate tables are rescaled to it when it is given.  CSV
    tables take ``k`` from the argument, defaulting to the largest need.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read workload file {path}: {exc}") from exc
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        if k is not None and isinstance(doc, dict):
            doc = {**doc, "k": k}
        return workload_from_dict(doc, total_rate, source=str(path))
    if fmt == "csv":
        reader = csv.DictReader(text.splitlines())
        fields = set(reader.fieldnames or [])
        if not {"need", "mean_size"} <= fields or not fields & {"rate", "fraction"}:
            raise ConfigurationError(f"{path}: CSV header must be need,rate|fraction,mean_size")
        return _rows_to_spec(k, list(reader), total_rate, str(path))
    raise ConfigurationError(f"unknown workload format {fmt!r}")
