"""Mutable system state shared by the simulator and the policies."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Sequence


@dataclass(frozen=True)
class PhaseState:
    """Policy phase variable.

    ``z`` is a policy-specific tag, ``blocked`` the needs whose queued jobs
    may not enter service in this phase, ``timer`` the time of the next
    queue-independent phase switch (if any).
    """

    z: Hashable = None
    blocked: frozenset = frozenset()
    timer: float | None = None


@dataclass
class SimState:
    """Occupancy ``n``, service counts ``u`` and phase ``z`` of a ``k``-server system.

    Per-class lists are indexed like ``needs`` (ascending).  ``queues`` hold
    job ids in arrival order; ``running`` maps in-service job ids to their
    completion times.
    """

    k: int
    needs: tuple[int, ...]
    n: list[int]
    u: list[int]
    queues: list[deque]
    free: int
    phase: PhaseState = field(default_factory=PhaseState)
    clock: float = 0.0
    running: dict[int, float] = field(default_factory=dict)

    @classmethod
    def empty(cls, k: int, needs: Sequence[int], phase: PhaseState | None = None) -> SimState:
        c = len(needs)
        return cls(k, tuple(needs), [0] * c, [0] * c, [deque() for _ in range(c)], k,
                   phase or PhaseState())

    @classmethod
    def from_queue(cls, k: int, needs: Sequence[int], queued: Sequence[int],
                   in_service: dict[int, int] | None = None,
                   phase: PhaseState | None = None) -> SimState:
        """Build a state from the needs of queued jobs in arrival order and a
        ``{need: count}`` map of jobs in service."""
        st = cls.empty(k, needs, phase)
        index = {need: i for i, need in enumerate(st.needs)}
        next_id = 0
        for need, count in (in_service or {}).items():
            i = index[need]
            for _ in range(count):
                st.running[next_id] = float("inf")
                next_id += 1
            st.u[i] += count
            st.n[i] += count
            st.free -= need * count
        for need in queued:
            i = index[need]
            st.queues[i].append(next_id)
            st.n[i] += 1
            next_id += 1
        if st.free < 0:
            raise ValueError("jobs in service exceed k servers")
        return st

    @property
    def queue_lengths(self) -> list[int]:
        return [len(q) for q in self.queues]

    def queue_order(self) -> list[tuple[int, int]]:
        """Queued ``(job id, class index)`` pairs in arrival order."""
        return sorted((j, i) for i, q in enumerate(self.queues) for j in q)

    def busy_servers(self) -> int:
        return sum(need * u for need, u in zip(self.needs, self.u))
