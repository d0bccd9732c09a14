"""Non-preemptive multiserver-job scheduling policies.

Every policy is a decision procedure over :class:`~msjlab.state.SimState`:
it is called after each arrival, completion or timer event and returns how
many queued jobs of each class enter service now, together with its
updated phase.  Jobs of one class always enter in arrival order, so a
decision is a per-class count of queue heads to admit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from msjlab.errors import ConfigurationError
from msjlab.state import PhaseState, SimState
from msjlab.workload import WorkloadSpec, class_generator

KINDS = ("fcfs", "first_fit", "msf", "msfq", "static_quickswap",
         "adaptive_quickswap", "nmsr_simplified")

# policy-side substream key, disjoint from the per-class (need >= 1) streams
_POLICY_STREAM = 0


@dataclass(frozen=True)
class PolicyConfig:
    """Which policy to run and its tuning.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    ell : int, optional
        Quickswap threshold.  MSFQ requires it; Static Quickswap defaults
        to ``k - 1``.
    cycle_order : sequence of int, optional
        Static Quickswap / nMSR class order by need (default descending).
    ell_overrides : dict, optional
        Static Quickswap per-need thresholds.
    cycle_length : float
        nMSR mean cycle length in mean job sizes.
    holding_means : sequence of float, optional
        nMSR mean holding time per schedule, overriding ``cycle_length``.
    """

    kind: str
    ell: int | None = None
    cycle_order: tuple[int, ...] | None = None
    ell_overrides: dict = field(default_factory=dict)
    cycle_length: float = 10.0
    holding_means: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown policy {self.kind!r}; choose from {KINDS}")
        if self.kind == "msfq" and self.ell is None:
            raise ConfigurationError("msfq needs a threshold ell")
        if self.cycle_order is not None:
            object.__setattr__(self, "cycle_order", tuple(int(x) for x in self.cycle_order))
        if self.holding_means is not None:
            object.__setattr__(self, "holding_means", tuple(float(x) for x in self.holding_means))
        object.__setattr__(self, "ell_overrides",
                           {int(a): int(b) for a, b in dict(self.ell_overrides).items()})

    @property
    def label(self) -> str:
        if self.kind == "msfq":
            return f"msfq({self.ell})"
        if self.kind == "static_quickswap" and self.ell is not None:
            return f"static_quickswap({self.ell})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> PolicyConfig:
        """``"msfq:31"`` style shorthand: kind with optional threshold."""
        kind, _, ell = text.partition(":")
        return cls(kind.strip(), int(ell) if ell else None)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.ell is not None:
            out["ell"] = self.ell
        if self.cycle_order is not None:
            out["cycle_order"] = list(self.cycle_order)
        if self.ell_overrides:
            out["ell_overrides"] = {str(a): b for a, b in self.ell_overrides.items()}
        if self.kind == "nmsr_simplified":
            out["cycle_length"] = self.cycle_length
            if self.holding_means is not None:
                out["holding_means"] = list(self.holding_means)
        return out

    @classmethod
    def from_dict(cls, doc) -> PolicyConfig:
        if isinstance(doc, str):
            return cls.parse(doc)
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ConfigurationError(f"policy entry needs a 'kind': {doc!r}")
        known = {"kind", "ell", "cycle_order", "ell_overrides", "cycle_length", "holding_means"}
        extra = set(doc) - known
        if extra:
            raise ConfigurationError(f"unknown policy fields {sorted(extra)}")
        return cls(**doc)


@dataclass(frozen=True)
class Decision:
    """Per-class admission counts, the new phase, and every phase tag
    entered during the decision (zero-length phases included)."""

    admit: tuple[int, ...]
    phase: PhaseState
    visited: tuple[Hashable, ...] = ()


class Policy:
    """Base class; subclasses implement :meth:`decide`."""

    phased = False

    def __init__(self, config: PolicyConfig, spec: WorkloadSpec):
        self.config = config
        self.k = spec.k
        self.needs = spec.needs
        self.nclass = len(self.needs)

    def initial_phase(self) -> PhaseState:
        return PhaseState()

    def decide(self, state: SimState) -> Decision | None:
        """Admissions for this instant, or ``None`` when nothing changes."""
        raise NotImplementedError

    def _scan_descending(self, state: SimState, admit: list[int], free: int,
                         allowed=None) -> int:
        # most servers first: largest need that fits, repeatedly
        needs, queues = self.needs, state.queues
        for i in range(self.nclass - 1, -1, -1):
            need = needs[i]
            if need > free:
                continue
            if allowed is not None and not allowed(i):
                continue
            a = min(len(queues[i]) - admit[i], free // need)
            if a > 0:
                admit[i] += a
                free -= a * need
        return free


class Fcfs(Policy):
    """Strict arrival order; the head of the queue blocks everyone behind it."""

    def decide(self, state):
        free, queues, needs = state.free, state.queues, self.needs
        admit = [0] * self.nclass
        while True:
            best, best_id = -1, math.inf
            for i, q in enumerate(queues):
                if admit[i] < len(q) and q[admit[i]] < best_id:
                    best, best_id = i, q[admit[i]]
            if best < 0 or needs[best] > free:
                break
            admit[best] += 1
            free -= needs[best]
        return Decision(tuple(admit), state.phase) if any(admit) else None


class FirstFit(Policy):
    """Arrival-order scan admitting every job that fits."""

    def decide(self, state):
        free, queues, needs = state.free, state.queues, self.needs
        admit = [0] * self.nclass
        live = [i for i in range(self.nclass) if queues[i] and needs[i] <= free]
        while live:
            best = min(live, key=lambda i: queues[i][admit[i]])
            if needs[best] > free:
                # later jobs of this class cannot fit either
                live.remove(best)
                continue
            admit[best] += 1
            free -= needs[best]
            if admit[best] == len(queues[best]):
                live.remove(best)
        return Decision(tuple(admit), state.phase) if any(admit) else None


P1, P2, P3, P4 = "P1", "P2", "P3", "P4"
_MSFQ_BLOCKED = {P1: frozenset({1}), P4: frozenset({1})}


class _OneOrAllPhases:
    """The four-phase machine of MSFQ on a one-or-all workload.

    Small jobs are admitted on entry to and during phases 2 and 3; the
    machine parks in phase 1 while the system is empty.
    """

    def __init__(self, spec: WorkloadSpec, ell: int):
        self.k, self.ell = spec.k, ell
        self.small = spec.index_of(1)
        self.large = spec.index_of(spec.k)
        self.blocked = {z: _MSFQ_BLOCKED.get(z, frozenset({spec.k})) for z in (P1, P2, P3, P4)}

    def advance(self, state: SimState, admit: list[int]) -> tuple[str, list[str]]:
        s, L, k = self.small, self.large, self.k
        n1 = state.n[s] if s is not None else 0
        nk = state.n[L] if L is not None else 0
        qs = len(state.queues[s]) if s is not None else 0
        free = state.free
        z = state.phase.z
        visited = []
        while True:
            if z == P1:
                if nk == 0:
                    if n1 == 0:
                        break
                    z = P2
                    visited.append(z)
                    continue
                if state.u[L] == 0 and free == k and state.queues[L]:
                    admit[L] = 1
                    free = 0
                break
            if z == P2 or z == P3:
                a = min(qs - admit[s], free) if s is not None else 0
                if a > 0:
                    admit[s] += a
                    free -= a
                if z == P2 and n1 < k:
                    z = P3
                    visited.append(z)
                    continue
                if z == P3 and n1 <= self.ell:
                    z = P4
                    visited.append(z)
                    continue
                break
            # P4: wait for the small jobs in service to finish
            u1 = (state.u[s] + admit[s]) if s is not None else 0
            if u1 == 0:
                z = P1
                visited.append(z)
                continue
            break
        return z, visited


class Msf(Policy):
    """Most Servers First: admit the largest-need queued job that fits,
    repeatedly, on every event.

    On one-or-all workloads the phase of the ``ell = 0`` quickswap machine
    is tracked alongside, for phase statistics; it never affects admission.
    """

    def __init__(self, config, spec):
        super().__init__(config, spec)
        self.tracker = _OneOrAllPhases(spec, 0) if spec.is_one_or_all else None
        self.phased = self.tracker is not None

    def initial_phase(self):
        if self.tracker is None:
            return PhaseState()
        return PhaseState(P1, self.tracker.blocked[P1])

    def decide(self, state):
        admit = [0] * self.nclass
        self._scan_descending(state, admit, state.free)
        phase, visited = state.phase, ()
        if self.tracker is not None:
            z, visited = self.tracker.advance(state, [0] * self.nclass)
            if visited:
                phase = PhaseState(z, self.tracker.blocked[z])
        if not visited and not any(admit):
            return None
        return Decision(tuple(admit), phase, tuple(visited))


class Msfq(Policy):
    """MSF with Quickswap on a one-or-all workload.

    Phase 1 serves large jobs one at a time until none remain; phase 2
    serves small jobs until fewer than ``k`` remain; phase 3 keeps admitting
    small jobs until at most ``ell`` remain; phase 4 admits nothing until
    the small jobs in service finish.
    """

    phased = True

    def __init__(self, config, spec):
        super().__init__(config, spec)
        if not spec.is_one_or_all:
            raise ConfigurationError(f"msfq needs a one-or-all workload, got needs {spec.needs}")
        ell = config.ell
        if not 0 <= ell <= spec.k - 1:
            raise ConfigurationError(f"msfq threshold must lie in [0, {spec.k - 1}], got {ell}")
        self.machine = _OneOrAllPhases(spec, ell)

    def initial_phase(self):
        return PhaseState(P1, self.machine.blocked[P1])

    def decide(self, state):
        admit = [0] * self.nclass
        z, visited = self.machine.advance(state, admit)
        if not visited and not any(admit):
            return None
        phase = PhaseState(z, self.machine.blocked[z]) if visited else state.phase
        return Decision(tuple(admit), phase, tuple(visited))


def _cycle(config: PolicyConfig, spec: WorkloadSpec) -> tuple[int, ...]:
    order = config.cycle_order or tuple(sorted(spec.needs, reverse=True))
    if sorted(order) != sorted(spec.needs):
        raise ConfigurationError(f"cycle order {order} is not a permutation of needs {spec.needs}")
    return tuple(spec.index_of(n) for n in order)


class StaticQuickswap(Policy):
    """Cycle through the classes; each gets a working phase running
    ``⌊k/need⌋`` of its jobs until more than ``k - ell`` servers sit idle,
    then a draining phase that admits nothing.

    A class with an empty queue is skipped at switch time; with every queue
    empty the policy idles until the next arrival.  A working phase with
    nothing in service and nothing queued also ends.
    """

    phased = True

    def __init__(self, config, spec):
        super().__init__(config, spec)
        self.order = _cycle(config, spec)
        default = spec.k - 1 if config.ell is None else config.ell
        self.ell = [config.ell_overrides.get(need, default) for need in self.needs]
        for need, ell in zip(self.needs, self.ell):
            if not 0 <= ell <= spec.k:
                raise ConfigurationError(f"static quickswap threshold {ell} for need {need} out of range")
        self.cap = [spec.k // need for need in self.needs]
        self._tags = {}

    def _phase(self, pos: int, mode: str) -> PhaseState:
        key = (pos, mode)
        if key not in self._tags:
            if mode == "idle":
                tag, blocked = "idle", frozenset()
            else:
                cur = self.needs[self.order[pos]]
                tag = f"c{cur}:{mode}"
                blocked = frozenset(n for n in self.needs if n != cur or mode == "draining")
            self._tags[key] = PhaseState((pos, mode, tag), blocked)
        return self._tags[key]

    def initial_phase(self):
        return self._phase(0, "idle")

    def _next_nonempty(self, state, start: int) -> int | None:
        m = len(self.order)
        for step in range(m):
            pos = (start + step) % m
            if state.queues[self.order[pos]]:
                return pos
        return None

    def decide(self, state):
        pos, mode, _ = state.phase.z
        admit = [0] * self.nclass
        free = state.free
        visited = []
        for _ in range(4 * len(self.order) + 4):
            if mode == "idle":
                nxt = self._next_nonempty(state, pos)
                if nxt is None:
                    break
                pos, mode = nxt, "working"
                visited.append(self._phase(pos, mode).z)
                continue
            c = self.order[pos]
            need = self.needs[c]
            if mode == "working":
                a = min(len(state.queues[c]) - admit[c], self.cap[c] - state.u[c] - admit[c],
                        free // need)
                if a > 0:
                    admit[c] += a
                    free -= a * need
                in_service = state.u[c] + admit[c]
                exhausted = in_service == 0 and len(state.queues[c]) == admit[c]
                if free > self.k - self.ell[c] or exhausted:
                    mode = "draining"
                    visited.append(self._phase(pos, mode).z)
                    continue
                break
            # draining
            if state.u[c] + admit[c] > 0:
                break
            nxt = self._next_nonempty(state, pos + 1)
            if nxt is None:
                pos, mode = (pos + 1) % len(self.order), "idle"
            else:
                pos, mode = nxt, "working"
            visited.append(self._phase(pos, mode).z)
        if not visited and not any(admit):
            return None
        phase = self._phase(pos, mode) if visited else state.phase
        return Decision(tuple(admit), phase, tuple(visited))


_WORKING = PhaseState("working", frozenset())


class AdaptiveQuickswap(Policy):
    """MSF admission with a quickswap trigger.

    The trigger fires when some class waits with none of its jobs in
    service while every class in service has an empty queue.  Draining then
    admits only the largest-need queued job (earliest on ties); once it
    enters service the working phase resumes.
    """

    phased = True

    def __init__(self, config, spec):
        super().__init__(config, spec)
        self._draining = PhaseState("draining", frozenset(spec.needs))

    def initial_phase(self):
        return _WORKING

    def _triggered(self, state, admit) -> bool:
        waiting_idle = False
        for i in range(self.nclass):
            queued = len(state.queues[i]) - admit[i]
            serving = state.u[i] + admit[i]
            if serving and queued:
                return False
            if queued and not serving:
                waiting_idle = True
        return waiting_idle

    def decide(self, state):
        z = state.phase.z
        admit = [0] * self.nclass
        free = state.free
        visited = []
        while True:
            if z == "working":
                free = self._scan_descending(state, admit, free)
                if self._triggered(state, admit):
                    z = "draining"
                    visited.append(z)
                    continue
                break
            top = None
            for i in range(self.nclass - 1, -1, -1):
                if len(state.queues[i]) > admit[i]:
                    top = i
                    break
            if top is None or self.needs[top] > free:
                break
            admit[top] += 1
            free -= self.needs[top]
            z = "working"
            visited.append(z)
        if not visited and not any(admit):
            return None
        phase = (_WORKING if z == "working" else self._draining) if visited else state.phase
        return Decision(tuple(admit), phase, tuple(visited))


class NmsrSimplified(Policy):
    """Queue-oblivious cyclic switching among single-class schedules.

    Schedule ``i`` allows ``⌊k/need_i⌋`` class-``i`` jobs in service and is
    held for an exponential time with mean proportional to the class's load
    share.  Switches never preempt: jobs of the previous schedule finish,
    but nothing beyond the new schedule's cap is admitted.
    """

    phased = True

    def __init__(self, config, spec, seed: int = 0):
        super().__init__(config, spec)
        order = _cycle(config, spec)
        shares, total = _load_shares(spec)
        if config.holding_means is not None:
            if len(config.holding_means) != len(order):
                raise ConfigurationError("one holding mean per schedule is required")
            means = list(config.holding_means)
        else:
            mean_size = float(np.dot(spec.fractions, spec.mean_sizes)) if spec.total_rate > 0 \
                else float(np.mean(spec.mean_sizes))
            cycle = config.cycle_length * mean_size
            means = [cycle * shares[c] / total if total > 0 else cycle / len(order)
                     for c in order]
        chain = [(c, m) for c, m in zip(order, means) if m > 0]
        if not chain:
            chain = [(order[0], config.cycle_length)]
        self.chain = chain
        self.cap = [spec.k // need for need in self.needs]
        self.rng = class_generator(seed, _POLICY_STREAM, 0)

    def _phase(self, pos: int, start: float) -> PhaseState:
        c, mean = self.chain[pos]
        timer = start + self.rng.exponential(mean) if len(self.chain) > 1 else None
        need = self.needs[c]
        return PhaseState((pos, f"s{need}"), frozenset(n for n in self.needs if n != need), timer)

    def initial_phase(self):
        return self._phase(0, 0.0)

    def decide(self, state):
        phase = state.phase
        visited = []
        while phase.timer is not None and phase.timer <= state.clock:
            pos = (phase.z[0] + 1) % len(self.chain)
            phase = self._phase(pos, phase.timer)
            visited.append(phase.z)
        c = self.chain[phase.z[0]][0]
        a = min(len(state.queues[c]), self.cap[c] - state.u[c], state.free // self.needs[c])
        admit = [0] * self.nclass
        if a > 0:
            admit[c] = a
        if not visited and not any(admit):
            return None
        return Decision(tuple(admit), phase, tuple(visited))


def _load_shares(spec: WorkloadSpec):
    shares = [c.need * c.arrival_rate * c.mean_size for c in spec.classes]
    return shares, math.fsum(shares)


_CLASSES = {
    "fcfs": Fcfs,
    "first_fit": FirstFit,
    "msf": Msf,
    "msfq": Msfq,
    "static_quickswap": StaticQuickswap,
    "adaptive_quickswap": AdaptiveQuickswap,
}


def make_policy(config: PolicyConfig | str, spec: WorkloadSpec, seed: int = 0) -> Policy:
    """Bind a policy configuration to a workload.

    ``seed`` drives the nMSR switching chain only; other policies are
    deterministic.
    """
    if isinstance(config, str):
        config = PolicyConfig.parse(config)
    if config.kind == "nmsr_simplified":
        return NmsrSimplified(config, spec, seed)
    return _CLASSES[config.kind](config, spec)


def decide(config: PolicyConfig | Policy, state: SimState,
           spec: WorkloadSpec | None = None) -> tuple[list[int], PhaseState]:
    """Job ids the policy admits from ``state`` and its updated phase.

    ``config`` may be a bound :class:`Policy`; otherwise ``spec`` is needed
    to bind it.  A state whose phase is unset starts from the policy's
    initial phase.
    """
    policy = config if isinstance(config, Policy) else make_policy(config, spec)
    if state.phase.z is None and policy.phased:
        state.phase = policy.initial_phase()
    out = policy.decide(state)
    if out is None:
        return [], state.phase
    ids = []
    for i, a in enumerate(out.admit):
        ids.extend(list(state.queues[i])[:a])
    return sorted(ids), out.phase


def policy_labels(configs: Sequence[PolicyConfig]) -> list[str]:
    return [c.label for c in configs]
