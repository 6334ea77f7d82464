"""
Per-slot scheduling policies and the two sufficient-condition checks.

Every ``*_schedule`` function is a pure decision ``(state, connectivity) ->
Schedule``; FBS additionally reads a FrameState.  Connectivity is an
(n, n) 0/1 array indexed ``[queue, server]``.

Servers that several allocators (D-MWS, Q-MWS, the stage-2 of the hybrid)
point at a queue with too few packets keep their allocation in the
Schedule with a ``None`` packet.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (Packet, PreconditionError, Schedule, SystemState, age_rank,
                   check_connectivity, validate_schedule)
from .matching import (BipartiteGraph, can_saturate, has_perfect_matching,
                       max_cardinality_matching, max_edge_weight_matching,
                       max_vertex_weight_matching)

__all__ = [
    "PolicyKind",
    "PolicySpec",
    "FrameState",
    "dwm_schedule",
    "dwmn_schedule",
    "dmws_schedule",
    "hybrid_dwmn_mws_schedule",
    "fbs_update_frames",
    "fbs_schedule",
    "perfect_matching_schedule",
    "qssg_schedule",
    "qmws_schedule",
    "opf_condition_check",
    "mwf_condition_check",
    "oldest_prefix_capacity",
    "make_policy",
]


class PolicyKind(str, enum.Enum):
    DWM = "DWM"
    DWM_N = "DWM_N"
    D_MWS = "D_MWS"
    HYBRID_DWMN_MWS = "HYBRID_DWMN_MWS"
    FBS = "FBS"
    PERFECT_MATCHING = "PERFECT_MATCHING"
    Q_SSG = "Q_SSG"
    Q_MWS = "Q_MWS"


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    fbs_h: int | None = None
    analysis_variant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if (self.kind is PolicyKind.FBS) != (self.fbs_h is not None):
            raise PreconditionError("fbs_h is required for FBS and only for FBS")
        if self.fbs_h is not None and self.fbs_h < 1:
            raise PreconditionError("fbs_h must be a positive integer")

    def check(self, n: int, L: int) -> None:
        if self.kind is PolicyKind.FBS and n - L * self.fbs_h < 1:
            raise PreconditionError(f"FBS needs n - L*h >= 1 (n={n}, L={L}, h={self.fbs_h})")

    @property
    def label(self) -> str:
        s = self.kind.value
        if self.kind is PolicyKind.FBS:
            s += f"(h={self.fbs_h})"
        if self.analysis_variant:
            s += "[analysis]"
        return s


def _conn(s: SystemState, c) -> np.ndarray:
    return check_connectivity(c, s.n)


# -- matching-based policies -------------------------------------------------

def dwm_schedule(s: SystemState, c) -> Schedule:
    """Delay weighted matching with the exact packet weights.

    Left side: the first min(Q_i, n) packets of every queue; an edge joins a
    packet to every server connected to its queue, weighted by the packet's
    weight key.  The schedule is a maximum edge-weight matching.
    """
    conn = _conn(s, c)
    n = s.n
    packets = [p for q in s.queues for p in list(q)[:n]]
    if not packets:
        return Schedule()
    qids = np.fromiter((p.queue_id for p in packets), dtype=np.int64, count=len(packets))
    keys = np.fromiter((s.key(p) for p in packets), dtype=np.int64, count=len(packets))
    mask = conn[qids]
    adj_by_queue = [np.flatnonzero(conn[i]).tolist() for i in range(n)]
    g = BipartiteGraph(len(packets), n, [adj_by_queue[i] for i in qids],
                       edge_weights=np.where(mask, keys[:, None], 0), mask=mask)
    m = max_edge_weight_matching(g)
    return Schedule({v: (packets[u].queue_id, packets[u].seq_id) for u, v in m.pairs})


def _dwmn_matching(s: SystemState, conn: np.ndarray):
    top = s.oldest(s.n)
    adj_by_queue = [np.flatnonzero(conn[i]).tolist() for i in range(s.n)]
    g = BipartiteGraph(len(top), s.n, [adj_by_queue[p.queue_id] for p in top],
                       left_weights=[s.key(p) for p in top])
    return top, max_vertex_weight_matching(g)


def dwmn_schedule(s: SystemState, c) -> Schedule:
    """Maximum vertex-weighted matching between the n oldest packets and the
    servers.  Unmatched servers stay idle."""
    conn = _conn(s, c)
    top, m = _dwmn_matching(s, conn)
    return Schedule({v: (top[u].queue_id, top[u].seq_id) for u, v in m.pairs})


def _greedy_by_server(queues: list[list[Packet]], weight: np.ndarray, servers, conn,
                      out: dict, residual: bool = False) -> None:
    # Each server takes the connected nonempty queue of largest weight
    # (smallest index on ties) and the next unclaimed packet of that queue.
    # With residual=True the weight of a queue drops by one per claimed packet.
    weight = weight.copy()
    taken = [0] * len(queues)
    nonempty = np.array([len(q) > 0 for q in queues])
    for j in servers:
        cand = np.flatnonzero(conn[:, j] & nonempty)
        if cand.size == 0:
            continue
        i = int(cand[np.argmax(weight[cand])])
        if taken[i] < len(queues[i]):
            out[j] = (i, queues[i][taken[i]].seq_id)
            taken[i] += 1
        else:
            out[j] = (i, None)
        if residual:
            weight[i] -= 1
            if taken[i] == len(queues[i]):
                nonempty[i] = False


def dmws_schedule(s: SystemState, c) -> Schedule:
    """Delay-based MaxWeight: each server independently picks the connected
    nonempty queue with the largest head-of-line delay."""
    conn = _conn(s, c)
    out: dict = {}
    _greedy_by_server([list(q) for q in s.queues], s.hol_delays(), range(s.n), conn, out)
    return Schedule(out)


def hybrid_dwmn_mws_schedule(s: SystemState, c) -> Schedule:
    """DWM-n on the n oldest packets, then D-MWS for the servers it left idle,
    run on what remains of each queue."""
    conn = _conn(s, c)
    top, m = _dwmn_matching(s, conn)
    out = {v: (top[u].queue_id, top[u].seq_id) for u, v in m.pairs}
    served = {top[u].seq_id for u, _ in m.pairs}
    rest = [[p for p in q if p.seq_id not in served] for q in s.queues]
    w_rest = np.array([s.slot - q[0].arrival_slot if q else 0 for q in rest], dtype=np.int64)
    idle = [j for j in range(s.n) if j not in out]
    _greedy_by_server(rest, w_rest, idle, conn, out)
    return Schedule(out)


def qssg_schedule(s: SystemState, c) -> Schedule:
    """Queue-length server-side greedy: servers in index order each take the
    connected queue with the largest residual length."""
    conn = _conn(s, c)
    out: dict = {}
    _greedy_by_server([list(q) for q in s.queues], s.queue_lengths(), range(s.n), conn, out,
                      residual=True)
    return Schedule(out)


def qmws_schedule(s: SystemState, c) -> Schedule:
    """Queue-length MaxWeight: D-MWS with queue lengths as weights."""
    conn = _conn(s, c)
    out: dict = {}
    _greedy_by_server([list(q) for q in s.queues], s.queue_lengths(), range(s.n), conn, out)
    return Schedule(out)


# -- frame based scheduling ----------------------------------------------------

@dataclass
class Frame:
    packets: list[Packet] = field(default_factory=list)

    @property
    def first_slot(self) -> int:
        return self.packets[0].arrival_slot

    @property
    def last_slot(self) -> int:
        return self.packets[-1].arrival_slot


@dataclass
class FrameState:
    """FIFO of frames; each frame holds at most ``capacity = n - L*h``
    packets whose arrival slots differ by at most ``h``."""

    capacity: int
    h: int
    frames: list[Frame] = field(default_factory=list)

    @classmethod
    def for_system(cls, n: int, L: int, h: int) -> "FrameState":
        if n - L * h < 1:
            raise PreconditionError(f"frame capacity n - L*h = {n - L * h} < 1")
        return cls(n - L * h, h)

    def head(self) -> Frame | None:
        return self.frames[0] if self.frames else None

    def pop_head(self) -> Frame:
        return self.frames.pop(0)


def fbs_update_frames(fs: FrameState, new_packets: list[Packet]) -> FrameState:
    """Fill the newest frame with ``new_packets`` (in the given order) and open
    a new frame whenever the size or time-span limit would be broken."""
    for p in new_packets:
        last = fs.frames[-1] if fs.frames else None
        if (last is None or len(last.packets) >= fs.capacity
                or p.arrival_slot - last.first_slot > fs.h):
            fs.frames.append(Frame([p]))
        else:
            last.packets.append(p)
    return fs


def fbs_schedule(s: SystemState, fs: FrameState, c) -> Schedule:
    """Serve the whole head frame if a matching covers all of it, else nothing."""
    conn = _conn(s, c)
    head = fs.head()
    if head is None:
        return Schedule()
    g = BipartiteGraph.from_matrix(conn[[p.queue_id for p in head.packets]])
    m = max_cardinality_matching(g)
    if len(m) < len(head.packets):
        return Schedule()
    return Schedule({v: (head.packets[u].queue_id, head.packets[u].seq_id) for u, v in m.pairs})


def perfect_matching_schedule(s: SystemState, c, analysis_variant: bool = False) -> Schedule:
    """If the queue/server graph has a perfect matching, every server serves
    the head packet of its matched queue; otherwise nobody is served.

    With ``analysis_variant`` a head packet is only served when its
    (arrival slot, slot order) class is the oldest class in the system.
    """
    conn = _conn(s, c)
    g = BipartiteGraph.from_matrix(conn)
    if not has_perfect_matching(g):
        return Schedule()
    m = max_cardinality_matching(g)
    oldest_class = None
    if analysis_variant:
        heads = [q[0] for q in s.queues if q]
        if heads:
            h = min(heads, key=age_rank)
            oldest_class = (h.arrival_slot, h.slot_order)
    out = {}
    for i, j in m.pairs:
        q = s.queues[i]
        if not q or (oldest_class is not None
                     and (q[0].arrival_slot, q[0].slot_order) != oldest_class):
            out[j] = (i, None)
        else:
            out[j] = (i, q[0].seq_id)
    return Schedule(out)


# -- sufficient-condition checks ---------------------------------------------

def oldest_prefix_capacity(s: SystemState, c) -> tuple[int, list[Packet]]:
    """Largest k such that the k oldest packets can all be served at once.

    Returns ``(k, oldest)`` where ``oldest`` lists the min(n, backlog)
    oldest packets.  Saturability of a prefix is monotone in its length,
    so k is found by bisection.
    """
    conn = _conn(s, c)
    top = s.oldest(s.n)
    g = BipartiteGraph.from_matrix(conn[[p.queue_id for p in top]]) if top else None
    lo, hi = 0, len(top)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if can_saturate(g, list(range(mid))):
            lo = mid
        else:
            hi = mid - 1
    return lo, top


def opf_condition_check(s: SystemState, c, sched: Schedule) -> bool:
    """True iff ``sched`` serves the k oldest packets for the largest k for
    which that is feasible.  Extra packets beyond that prefix are allowed."""
    validate_schedule(s, c, sched)
    k, top = oldest_prefix_capacity(s, c)
    served = set(sched.served_ids())
    return all(p.seq_id in served for p in top[:k])


def mwf_condition_check(s: SystemState, c, sched: Schedule, M: int | None = None) -> bool:
    """Per-server check that the allocated queue's HOL delay is at least the
    delay of the M-th packet of every maximal-HOL connected queue holding
    M or more packets.  A server left without allocation fails whenever
    such a queue exists.  M defaults to n."""
    validate_schedule(s, c, sched)
    conn = _conn(s, c)
    M = s.n if M is None else M
    if M < 1:
        raise PreconditionError("M must be positive")
    Q = s.queue_lengths()
    W = s.hol_delays()
    for j in range(s.n):
        cand = np.flatnonzero(conn[:, j] & (Q > 0))
        if cand.size == 0:
            continue
        gamma = cand[W[cand] == W[cand].max()]
        heavy = [int(r) for r in gamma if Q[r] >= M]
        if not heavy:
            continue
        i = sched.queue_of(j)
        if i is None:
            return False
        if any(W[i] < s.delay(r, M) for r in heavy):
            return False
    return True


# -- stateful wrappers for the simulation loop --------------------------------

class ReferencePolicy:
    """Bind a PolicySpec to a system; ``decide`` is called once per slot after
    arrivals, with the packets that just arrived."""

    def __init__(self, spec: PolicySpec, n: int, L: int):
        spec.check(n, L)
        self.spec = spec
        self.frames = (FrameState.for_system(n, L, spec.fbs_h)
                       if spec.kind is PolicyKind.FBS else None)
        self._fn: Callable = {
            PolicyKind.DWM: dwm_schedule,
            PolicyKind.DWM_N: dwmn_schedule,
            PolicyKind.D_MWS: dmws_schedule,
            PolicyKind.HYBRID_DWMN_MWS: hybrid_dwmn_mws_schedule,
            PolicyKind.Q_SSG: qssg_schedule,
            PolicyKind.Q_MWS: qmws_schedule,
        }.get(spec.kind)

    def decide(self, s: SystemState, c, arrived: list[Packet]) -> Schedule:
        kind = self.spec.kind
        if kind is PolicyKind.FBS:
            order = arrived if self.spec.analysis_variant else sorted(
                arrived, key=lambda p: (p.queue_id, p.slot_order))
            fbs_update_frames(self.frames, order)
            sched = fbs_schedule(s, self.frames, c)
            if sched.served_count():
                self.frames.pop_head()
            return sched
        if kind is PolicyKind.PERFECT_MATCHING:
            return perfect_matching_schedule(s, c, self.spec.analysis_variant)
        return self._fn(s, c)


def make_policy(spec: PolicySpec, n: int, L: int) -> ReferencePolicy:
    return ReferencePolicy(spec, n, L)
