"""Discrete-event backbone.

All components share one integer time base in picoseconds. Clock domains
convert their local cycle counts into that base with a rounded period, so
a 1666 MHz DRAM clock ticks every 600 ps.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

PS_PER_SECOND = 10**12


@dataclass(frozen=True)
class ClockDomain:
    name: str
    frequency_hz: int

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError(f"clock domain {self.name!r} needs a positive frequency")

    @property
    def period_ps(self) -> int:
        # round-half-up on exact integer arithmetic
        return (2 * PS_PER_SECOND + self.frequency_hz) // (2 * self.frequency_hz)


def cycles_to_time(n: int, domain: ClockDomain) -> int:
    """Return ``n`` cycles of ``domain`` in picoseconds."""
    return int(n) * domain.period_ps


def time_to_cycles(t: int, domain: ClockDomain) -> int:
    """Whole cycles of ``domain`` elapsed by time ``t`` (rounded up)."""
    p = domain.period_ps
    return -(-int(t) // p)


@dataclass(order=True)
class Event:
    due: int
    sequence: int
    target: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current time."""


class EventQueue:
    """Single global queue; equal ``due`` events fire in insertion order."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0
        self.fired = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, due: int, target: str, payload: Any = None) -> Event:
        if due < self.now:
            raise SchedulingError(f"event for {target!r} at {due} ps is before now={self.now} ps")
        ev = Event(int(due), self._seq, target, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def advance(self) -> Event | None:
        """Pop and return the next event, or ``None`` when the queue is empty."""
        if not self._heap:
            return None
        ev = heapq.heappop(self._heap)
        self.now = ev.due
        self.fired += 1
        return ev

    def run(self, handler: Callable[[Event], None], until: int | None = None) -> int:
        while self._heap:
            if until is not None and self._heap[0].due > until:
                break
            handler(self.advance())
        return self.now
