"""
Simulation loops.

``simulate_reference`` drives the object-level state and policies of
``core``/``policies`` and can call back on every slot (used by the
condition checks and the dominance tests).  ``simulate_fast`` runs the
compiled kernel for the policies it supports.  Both consume the same
traces, and when several policies are given they all see identical
arrivals and connectivity.

Per-slot order: arrivals, W(t) measurement, scheduling, departures, then
the slot advances.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import DelayStats, record_slot
from .core import SystemState
from .fast import FAST_CODES, FastQueues, run_chunk
from .policies import PolicySpec, make_policy
from .traffic import (ARRIVALS, CHANNEL, ArrivalModel, ChannelModel, RngStream, gen_arrivals,
                      gen_connectivity, init_arrival_state, init_channel_state)

__all__ = ["TraceSource", "CellResult", "simulate_reference", "simulate_fast", "simulate",
           "supports_fast"]


class TraceSource:
    """Arrival and connectivity traces for one (seed, replication, n)."""

    def __init__(self, arrival: ArrivalModel, channel: ChannelModel, n: int, seed: int,
                 replication: int = 0, salt: int = 0):
        # salt > 0 gives a policy its own traces (uncoupled runs)
        self.arrival, self.channel, self.n = arrival, channel, n
        extra = (salt,) if salt else ()
        self.arr_rng = RngStream(seed, (replication, n, ARRIVALS) + extra)
        self.ch_rng = RngStream(seed, (replication, n, CHANNEL) + extra)
        self.arr_state = init_arrival_state(arrival, self.arr_rng, n)
        self.ch_state = init_channel_state(channel, self.ch_rng, n)
        self.slot = 0
        self._hash = hashlib.sha256()

    def next_chunk(self, T: int) -> tuple[np.ndarray, np.ndarray]:
        a, _ = gen_arrivals(self.arrival, self.arr_state, self.arr_rng, self.n, self.slot, T)
        c, _ = gen_connectivity(self.channel, self.ch_state, self.ch_rng, self.n, T)
        self.slot += T
        self._hash.update(a.astype(np.int64).tobytes())
        self._hash.update(np.packbits(c).tobytes())
        return a, c

    def digest(self) -> str:
        """Hash of everything generated so far."""
        return self._hash.hexdigest()


@dataclass
class CellResult:
    spec: PolicySpec
    n: int
    seed: int
    replication: int
    stats: DelayStats
    seconds: float = 0.0
    trace_digest: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def seconds_per_slot(self) -> float:
        return self.seconds / self.stats.horizon if self.stats.horizon else 0.0


def supports_fast(spec: PolicySpec) -> bool:
    return spec.kind in FAST_CODES and not spec.analysis_variant


def _chunk_len(n: int, horizon: int) -> int:
    return max(1, min(horizon, (1 << 21) // (n * n)))


def simulate_reference(specs: Sequence[PolicySpec], n: int, arrival: ArrivalModel,
                       channel: ChannelModel, horizon: int, seed: int, replication: int = 0,
                       warmup: int = 0, thresholds=(0, 1, 2), stride: int = 100,
                       on_slot: Callable | None = None, salt: int = 0) -> list[CellResult]:
    """Object-level coupled simulation.

    ``on_slot(k, state, conn, schedule, served)`` is called for policy k
    after its decision and departures; ``state`` is a snapshot taken
    before departures (so it is the state the decision was made on).
    """
    L = arrival.L
    src = TraceSource(arrival, channel, n, seed, replication, salt)
    states = [SystemState(n, L) for _ in specs]
    policies = [make_policy(sp, n, L) for sp in specs]
    stats = [DelayStats(tuple(thresholds), warmup, stride) for _ in specs]
    seconds = [0.0] * len(specs)
    done = 0
    while done < horizon:
        T = _chunk_len(n, horizon - done)
        arrivals, conn = src.next_chunk(T)
        for tt in range(T):
            c = conn[tt]
            for k, (s, pol) in enumerate(zip(states, policies)):
                arrived = s.apply_arrivals(arrivals[tt])
                record_slot(stats[k], s)
                t0 = time.perf_counter()
                sched = pol.decide(s, c, arrived)
                seconds[k] += time.perf_counter() - t0
                before = s.copy() if on_slot is not None else None
                served = s.apply_schedule(sched)
                if on_slot is not None:
                    on_slot(k, before, c, sched, served)
                s.advance_slot()
        done += T
    digest = src.digest()
    return [CellResult(sp, n, seed, replication, st, sec, digest, {"final_state": s})
            for sp, st, sec, s in zip(specs, stats, seconds, states)]


def simulate_fast(specs: Sequence[PolicySpec], n: int, arrival: ArrivalModel,
                  channel: ChannelModel, horizon: int, seed: int, replication: int = 0,
                  warmup: int = 0, thresholds=(0, 1, 2), stride: int = 100,
                  hist_size: int = 4096, keep_served: bool = False,
                  salt: int = 0) -> list[CellResult]:
    """Compiled coupled simulation; every policy must satisfy ``supports_fast``."""
    for sp in specs:
        if not supports_fast(sp):
            raise ValueError(f"{sp.label} has no compiled implementation")
    src = TraceSource(arrival, channel, n, seed, replication, salt)
    queues = [FastQueues(n) for _ in specs]
    stats = [DelayStats(tuple(thresholds), warmup, stride, hist_size) for _ in specs]
    traces = [np.zeros(horizon // stride + 1, dtype=np.int64) for _ in specs]
    served = [np.zeros((horizon if keep_served else 1, n), dtype=np.int64) for _ in specs]
    seconds = [0.0] * len(specs)
    done = 0
    while done < horizon:
        T = _chunk_len(n, horizon - done)
        arrivals, conn = src.next_chunk(T)
        for k, sp in enumerate(specs):
            fq = queues[k]
            off = 0
            t0 = time.perf_counter()
            while off < T:
                out = served[k][done + off:] if keep_served else served[k]
                status = run_chunk(FAST_CODES[sp.kind], done + off, arrivals[off:], conn[off:],
                                   fq.slot_of, fq.order_of, fq.head, fq.length, warmup,
                                   stats[k].w_hist, stride, traces[k], out, keep_served)
                if status < 0:
                    break
                off += status
                fq.grow()
            seconds[k] += time.perf_counter() - t0
        done += T
    digest = src.digest()
    results = []
    for k, sp in enumerate(specs):
        st = stats[k]
        st.horizon = horizon
        nz = np.flatnonzero(st.w_hist)
        st.max_W_seen = int(nz[-1]) if nz.size else 0
        slots = np.arange(0, horizon, stride)
        st.backlog_trace = [(int(t), int(b)) for t, b in zip(slots, traces[k][:slots.size])]
        extra = {"final_backlog": queues[k].backlog(), "queues": queues[k]}
        if keep_served:
            extra["served"] = served[k]
        results.append(CellResult(sp, n, seed, replication, st, seconds[k], digest, extra))
    return results


def simulate(specs: Sequence[PolicySpec], n: int, arrival: ArrivalModel, channel: ChannelModel,
             horizon: int, seed: int, replication: int = 0, **kw) -> list[CellResult]:
    """Coupled simulation, compiled where possible.

    Policies without a compiled version (FBS, perfect matching, analysis
    variants) go through the reference loop on the same traces.
    """
    fast = [sp for sp in specs if supports_fast(sp)]
    slow = [sp for sp in specs if not supports_fast(sp)]
    by_spec = {}
    if fast:
        for r in simulate_fast(fast, n, arrival, channel, horizon, seed, replication, **kw):
            by_spec[r.spec] = r
    if slow:
        kw.pop("hist_size", None)
        kw.pop("keep_served", None)
        for r in simulate_reference(slow, n, arrival, channel, horizon, seed, replication, **kw):
            by_spec[r.spec] = r
    return [by_spec[sp] for sp in specs]
