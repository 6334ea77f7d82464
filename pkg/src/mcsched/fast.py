"""
Compiled simulation kernel for long runs.

Queues are ring buffers of (arrival slot, slot order).  Every policy here
serves a head-of-line prefix of each queue, so a slot's decision reduces
to a per-queue served count.  The matching policies work at queue level:
packets of one queue share a neighbourhood, so the descending-weight
augmenting-path construction of the vertex-weighted matching can track
which queue owns each server instead of which packet.  The BFS visits
servers in the same order as the packet-level routine in ``matching``,
so the set of servers left idle (which the hybrid hands to its second
stage) is identical.

Modified DWM uses the same construction over the first n packets of every
queue.  With distinct weights the set of packets covered by a maximum
weight matching is unique (it is the greedy basis of a transversal
matroid), so this agrees with the assignment-based ``dwm_schedule`` on
which packets leave the system.
"""

from __future__ import annotations

import numba
import numpy as np

from .policies import PolicyKind

__all__ = ["FAST_CODES", "FastQueues", "run_chunk"]

FAST_CODES = {
    PolicyKind.DWM: 0,
    PolicyKind.DWM_N: 1,
    PolicyKind.D_MWS: 2,
    PolicyKind.HYBRID_DWMN_MWS: 3,
    PolicyKind.Q_SSG: 4,
    PolicyKind.Q_MWS: 5,
}


class FastQueues:
    """Ring-buffer queue storage plus run counters; grows on demand."""

    def __init__(self, n: int, capacity: int = 256):
        self.n = n
        self.slot_of = np.zeros((n, capacity), dtype=np.int64)
        self.order_of = np.zeros((n, capacity), dtype=np.int32)
        self.head = np.zeros(n, dtype=np.int64)
        self.length = np.zeros(n, dtype=np.int64)

    @property
    def capacity(self) -> int:
        return self.slot_of.shape[1]

    def grow(self) -> None:
        cap = self.capacity
        new_cap = cap * 2
        s = np.zeros((self.n, new_cap), dtype=np.int64)
        o = np.zeros((self.n, new_cap), dtype=np.int32)
        for i in range(self.n):
            idx = (self.head[i] + np.arange(self.length[i])) % cap
            s[i, :self.length[i]] = self.slot_of[i, idx]
            o[i, :self.length[i]] = self.order_of[i, idx]
        self.slot_of, self.order_of = s, o
        self.head[:] = 0

    def backlog(self) -> int:
        return int(self.length.sum())

    def hol_delays(self, slot: int) -> np.ndarray:
        cap = self.capacity
        out = np.zeros(self.n, dtype=np.int64)
        for i in range(self.n):
            if self.length[i]:
                out[i] = slot - self.slot_of[i, self.head[i] % cap]
        return out


@numba.njit(cache=True)
def _augment(root, conn_t, owner, n, srv_seen, q_seen, via, par, bfs):
    # queue-level BFS for an augmenting path from `root`; servers in index order
    for j in range(n):
        srv_seen[j] = False
    for i in range(n):
        q_seen[i] = False
    head = 0
    tail = 0
    bfs[tail] = root
    tail += 1
    q_seen[root] = True
    via[root] = -1
    while head < tail:
        a = bfs[head]
        head += 1
        for j in range(n):
            if not conn_t[a, j] or srv_seen[j]:
                continue
            srv_seen[j] = True
            par[j] = a
            b = owner[j]
            if b < 0:
                cur = j
                while True:
                    a2 = par[cur]
                    prev = via[a2]
                    owner[cur] = a2
                    if prev < 0:
                        return True
                    cur = prev
            if not q_seen[b]:
                q_seen[b] = True
                via[b] = j
                bfs[tail] = b
                tail += 1
    return False


@numba.njit(cache=True)
def _greedy_stage(t, servers_mask, conn_t, n, slot_of, head, length, srv, cap, mode):
    # mode 0: HOL delay of the residual queue, fixed for the stage (D-MWS)
    # mode 1: slot-start queue length, fixed (Q-MWS)
    # mode 2: residual queue length, decremented per claim (Q-SSG)
    avail = np.empty(n, dtype=np.int64)
    weight = np.empty(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.int64)
    for i in range(n):
        avail[i] = length[i] - srv[i]
        if mode == 0:
            if avail[i] > 0:
                weight[i] = t - slot_of[i, (head[i] + srv[i]) % cap]
            else:
                weight[i] = 0
        else:
            weight[i] = length[i] - srv[i]
    for j in range(n):
        if not servers_mask[j]:
            continue
        best = -1
        bw = -1
        for i in range(n):
            if conn_t[i, j] and avail[i] - (used[i] if mode == 2 else 0) > 0:
                if weight[i] > bw:
                    bw = weight[i]
                    best = i
        if best < 0:
            continue
        if used[best] < avail[best]:
            used[best] += 1
        if mode == 2:
            weight[best] -= 1
    for i in range(n):
        srv[i] += used[i]


@numba.njit(cache=True)
def _matching_stage(code, t, conn_t, n, slot_of, order_of, head, length, srv, owner, cap,
                    srv_seen, q_seen, via, par, bfs):
    # code 0: DWM over the first n packets of each queue
    # code 1/3: the n oldest packets of the whole system
    ptr = np.zeros(n, dtype=np.int64)
    dead = np.zeros(n, dtype=np.bool_)
    matched = 0
    considered = 0
    for j in range(n):
        owner[j] = -1
    while True:
        if code != 0 and considered == n:
            break
        if code == 0 and matched == n:
            break
        best = -1
        bs = 0
        bo = 0
        for i in range(n):
            if ptr[i] >= length[i] or ptr[i] >= n:
                continue
            if code == 0 and dead[i]:
                continue
            k = (head[i] + ptr[i]) % cap
            s = slot_of[i, k]
            o = order_of[i, k]
            if best < 0 or s < bs or (s == bs and o < bo):
                best = i
                bs = s
                bo = o
        if best < 0:
            break
        considered += 1
        ptr[best] += 1
        if dead[best] or matched == n:
            continue
        if _augment(best, conn_t, owner, n, srv_seen, q_seen, via, par, bfs):
            srv[best] += 1
            matched += 1
        else:
            dead[best] = True


@numba.njit(cache=True)
def run_chunk(code, t0, arrivals, conn, slot_of, order_of, head, length,
              warmup, w_hist, stride, backlog_trace, served_trace, want_trace):
    """Simulate ``len(arrivals)`` slots starting at slot ``t0``.

    Returns -1 when the chunk completes, otherwise the chunk offset at
    which the ring buffers ran out of room (nothing of that slot has been
    applied yet).
    """
    T = arrivals.shape[0]
    n = arrivals.shape[1]
    cap = slot_of.shape[1]
    hmax = w_hist.shape[0] - 1
    srv = np.zeros(n, dtype=np.int64)
    owner = np.empty(n, dtype=np.int64)
    srv_seen = np.zeros(n, dtype=np.bool_)
    q_seen = np.zeros(n, dtype=np.bool_)
    via = np.empty(n, dtype=np.int64)
    par = np.empty(n, dtype=np.int64)
    bfs = np.empty(n, dtype=np.int64)
    all_servers = np.ones(n, dtype=np.bool_)
    idle = np.zeros(n, dtype=np.bool_)
    for tt in range(T):
        t = t0 + tt
        for i in range(n):
            if length[i] + arrivals[tt, i] > cap:
                return tt
        # arrivals
        for i in range(n):
            for x in range(arrivals[tt, i]):
                k = (head[i] + length[i]) % cap
                slot_of[i, k] = t
                order_of[i, k] = x + 1
                length[i] += 1
        # measurement after arrivals, before service
        W = 0
        total = 0
        for i in range(n):
            total += length[i]
            if length[i] > 0:
                w = t - slot_of[i, head[i] % cap]
                if w > W:
                    W = w
        if t >= warmup:
            w_hist[min(W, hmax)] += 1
        if t % stride == 0:
            idx = t // stride
            if idx < backlog_trace.shape[0]:
                backlog_trace[idx] = total
        # decision
        for i in range(n):
            srv[i] = 0
        conn_t = conn[tt]
        if code == 0 or code == 1 or code == 3:
            _matching_stage(code, t, conn_t, n, slot_of, order_of, head, length, srv, owner,
                            cap, srv_seen, q_seen, via, par, bfs)
            if code == 3:
                for j in range(n):
                    idle[j] = owner[j] < 0
                _greedy_stage(t, idle, conn_t, n, slot_of, head, length, srv, cap, 0)
        elif code == 2:
            _greedy_stage(t, all_servers, conn_t, n, slot_of, head, length, srv, cap, 0)
        elif code == 4:
            _greedy_stage(t, all_servers, conn_t, n, slot_of, head, length, srv, cap, 2)
        else:
            _greedy_stage(t, all_servers, conn_t, n, slot_of, head, length, srv, cap, 1)
        # departures
        for i in range(n):
            if want_trace:
                served_trace[tt, i] = srv[i]
            head[i] = (head[i] + srv[i]) % cap
            length[i] -= srv[i]
    return -1
