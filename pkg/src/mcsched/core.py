"""
Discrete-time state of a multi-queue multi-server downlink.

Queues and servers are indexed from 0.  A packet's ``slot_order`` is the
1-based position among the packets that reached the same queue in the same
slot.  Each slot runs: arrivals, scheduling, departures, then the slot
counter advances (which ages every remaining packet by one).

Packets are totally ordered by age.  The weight

    w(p) = (t - t_p) + (L+1-x_p)/(L+1) + (n+1-q_p)/((L+1)(n+1)),   q_p = queue_id + 1

is kept as an exact integer key scaled by (L+1)(n+1), so that ties never
occur between distinct packets.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from heapq import merge
from itertools import islice
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PreconditionError",
    "ScheduleError",
    "Packet",
    "Schedule",
    "SystemState",
    "packet_weight",
    "weight_key",
    "age_rank",
    "check_connectivity",
    "validate_schedule",
]


class PreconditionError(ValueError):
    """An operation was called with arguments outside its domain."""


class ScheduleError(ValueError):
    """A schedule is inconsistent with the state or the connectivity."""


@dataclass(frozen=True)
class Packet:
    arrival_slot: int
    queue_id: int
    slot_order: int
    seq_id: int = field(default=-1, compare=False)

    @property
    def ident(self) -> tuple[int, int, int]:
        """Identity that is stable across coupled systems fed the same arrivals."""
        return (self.arrival_slot, self.queue_id, self.slot_order)


def age_rank(p: Packet) -> tuple[int, int, int]:
    """Sort key under which older (heavier) packets come first."""
    return (p.arrival_slot, p.slot_order, p.queue_id)


def _check_packet(p: Packet, n: int, L: int) -> None:
    if not 0 <= p.queue_id < n:
        raise PreconditionError(f"queue_id {p.queue_id} outside [0, {n})")
    if not 1 <= p.slot_order <= L:
        raise PreconditionError(f"slot_order {p.slot_order} outside [1, {L}]")


def weight_key(p: Packet, t: int, n: int, L: int) -> int:
    """Integer weight key, equal to ``packet_weight * (L+1) * (n+1)``."""
    _check_packet(p, n, L)
    if t < p.arrival_slot:
        raise PreconditionError(f"slot {t} precedes arrival slot {p.arrival_slot}")
    return ((t - p.arrival_slot) * (L + 1) * (n + 1)
            + (L + 1 - p.slot_order) * (n + 1)
            + (n - p.queue_id))


def packet_weight(p: Packet, t: int, n: int, L: int) -> Fraction:
    """Exact rational weight of packet ``p`` at slot ``t``."""
    return Fraction(weight_key(p, t, n, L), (L + 1) * (n + 1))


@dataclass
class Schedule:
    """Server allocations for one slot.

    ``assignments`` maps a server to ``(queue_id, seq_id)``.  A ``seq_id`` of
    ``None`` records a server that was allocated to a queue with no packet
    left to give it (possible when several servers pick the same short
    queue); such a server transmits nothing.
    """

    assignments: dict[int, tuple[int, int | None]] = field(default_factory=dict)

    def served_ids(self) -> list[int]:
        return [sid for _, sid in self.assignments.values() if sid is not None]

    def served_count(self) -> int:
        return sum(1 for _, sid in self.assignments.values() if sid is not None)

    def queue_of(self, server: int) -> int | None:
        a = self.assignments.get(server)
        return None if a is None else a[0]

    def __len__(self) -> int:
        return len(self.assignments)


class SystemState:
    """Per-queue FIFO packet buffers plus the current slot index."""

    def __init__(self, n: int, L: int, slot: int = 0):
        if n < 1 or L < 1:
            raise PreconditionError("n and L must be positive")
        self.n = n
        self.L = L
        self.slot = slot
        self.queues: list[deque[Packet]] = [deque() for _ in range(n)]
        self._next_seq = 0

    def copy(self) -> "SystemState":
        other = SystemState(self.n, self.L, self.slot)
        other.queues = [deque(q) for q in self.queues]
        other._next_seq = self._next_seq
        return other

    # -- derived quantities -------------------------------------------------

    @property
    def backlog(self) -> int:
        return sum(len(q) for q in self.queues)

    def queue_lengths(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues], dtype=np.int64)

    def delay(self, i: int, l: int) -> int:
        """Waiting time of the l-th (1-based) packet of queue i."""
        return self.slot - self.queues[i][l - 1].arrival_slot

    def hol_delay(self, i: int) -> int:
        """Head-of-line delay of queue i; 0 for an empty queue."""
        q = self.queues[i]
        return self.slot - q[0].arrival_slot if q else 0

    def hol_delays(self) -> np.ndarray:
        return np.array([self.hol_delay(i) for i in range(self.n)], dtype=np.int64)

    def max_hol_delay(self) -> int:
        return max((self.hol_delay(i) for i in range(self.n)), default=0)

    def packets(self) -> Iterable[Packet]:
        for q in self.queues:
            yield from q

    def key(self, p: Packet) -> int:
        return weight_key(p, self.slot, self.n, self.L)

    # -- operations ---------------------------------------------------------

    def oldest(self, k: int) -> list[Packet]:
        """The ``min(k, backlog)`` heaviest packets, heaviest first.

        Each queue is already sorted, so this is an n-way merge.
        """
        if k < 0:
            raise PreconditionError("k must be nonnegative")
        return list(islice(merge(*self.queues, key=age_rank), k))

    def apply_arrivals(self, counts: Sequence[int]) -> list[Packet]:
        """Append ``counts[i]`` fresh packets to each queue; returns them in
        descending weight order."""
        if len(counts) != self.n:
            raise PreconditionError(f"expected {self.n} arrival counts, got {len(counts)}")
        bad = [i for i, c in enumerate(counts) if not 0 <= c <= self.L]
        if bad:
            raise PreconditionError(f"arrival counts outside [0, {self.L}] for queues {bad}")
        new = []
        for i, c in enumerate(counts):
            for x in range(1, int(c) + 1):
                p = Packet(self.slot, i, x, self._next_seq)
                self._next_seq += 1
                self.queues[i].append(p)
                new.append(p)
        new.sort(key=age_rank)
        return new

    def apply_schedule(self, sched: Schedule) -> list[Packet]:
        """Remove every packet named by ``sched``; returns the served packets."""
        wanted: dict[int, int] = {}
        for server, (qid, sid) in sched.assignments.items():
            if not 0 <= qid < self.n:
                raise ScheduleError(f"server {server} assigned to unknown queue {qid}")
            if sid is None:
                continue
            if sid in wanted:
                raise ScheduleError(f"packet {sid} assigned to two servers")
            wanted[sid] = qid
        served = []
        for qid in set(wanted.values()):
            keep = deque()
            for p in self.queues[qid]:
                if wanted.get(p.seq_id) == qid:
                    served.append(p)
                else:
                    keep.append(p)
            self.queues[qid] = keep
        if len(served) != len(wanted):
            found = {p.seq_id for p in served}
            missing = sorted(set(wanted) - found)
            raise ScheduleError(f"schedule references absent packets {missing}")
        served.sort(key=age_rank)
        return served

    def advance_slot(self) -> None:
        self.slot += 1

    def __repr__(self) -> str:
        return f"SystemState(slot={self.slot}, n={self.n}, L={self.L}, Q={self.queue_lengths().tolist()})"


def check_connectivity(c, n: int) -> np.ndarray:
    """Coerce to an (n, n) boolean array indexed ``[queue, server]``."""
    arr = np.asarray(c)
    if arr.shape != (n, n):
        raise PreconditionError(f"connectivity must be {n}x{n}, got {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise PreconditionError("connectivity entries must be 0 or 1")
    return arr.astype(bool)


def validate_schedule(s: SystemState, c, sched: Schedule) -> None:
    """Raise ScheduleError unless ``sched`` is feasible for ``(s, c)``."""
    conn = check_connectivity(c, s.n)
    where = {p.seq_id: p.queue_id for p in s.packets()}
    seen = set()
    for server, (qid, sid) in sched.assignments.items():
        if not 0 <= server < s.n:
            raise ScheduleError(f"unknown server {server}")
        if not conn[qid, server]:
            raise ScheduleError(f"server {server} is not connected to queue {qid}")
        if sid is None:
            continue
        if sid in seen:
            raise ScheduleError(f"packet {sid} served twice")
        seen.add(sid)
        if where.get(sid) != qid:
            raise ScheduleError(f"packet {sid} is not in queue {qid}")
