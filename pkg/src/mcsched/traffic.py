"""
Seeded arrival and channel generators.

Every trace is drawn from its own Philox stream, keyed by
``(seed, replication, n, entity)``, so the arrival and connectivity traces
of a run do not depend on which policies consume them.  Generating ``T``
slots in one call gives exactly the same values as ``T`` one-slot calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import PreconditionError

__all__ = [
    "ArrivalModel",
    "ChannelModel",
    "RngStream",
    "ARRIVALS",
    "CHANNEL",
    "gen_arrivals",
    "gen_connectivity",
    "init_arrival_state",
    "init_channel_state",
    "stationary_two_state",
]

ARRIVALS = 0
CHANNEL = 1


class RngStream:
    """A reproducible random stream for one (replication, entity) label."""

    def __init__(self, seed: int, stream_id: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = tuple(int(x) for x in stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def random(self, size=None, dtype=np.float64):
        return self.generator.random(size, dtype=dtype)


def _check_stochastic(P, name):
    P = np.asarray(P, dtype=float)
    if P.shape != (2, 2) or (P < 0).any() or not np.allclose(P.sum(axis=1), 1.0):
        raise PreconditionError(f"{name} must be a 2x2 row-stochastic matrix")
    return P


def stationary_two_state(P) -> float:
    """Stationary probability of state 1 (the first row/column)."""
    P = np.asarray(P, dtype=float)
    a, b = P[0, 1], P[1, 0]
    return b / (a + b)


@dataclass(frozen=True)
class ArrivalModel:
    """``kind`` is one of ``bernoulli``, ``markov_burst``, ``counterexample``.

    bernoulli: each user independently receives ``batch`` packets (1 by
    default) with probability ``p`` in every slot.  markov_burst: each user
    delivers ``batch`` packets per slot while its chain sits in state 1 and
    none in state 2; transitions happen at the end of the slot.
    counterexample: two users, two-slot frames phase locked to even slots;
    with probability ``p`` a frame brings ``K`` packets to queue 0 in its
    first slot and ``K`` to queue 1 in its second.
    """

    kind: str
    p: float = 0.0
    batch: int = 1
    P: tuple = ((0.5, 0.5), (0.1, 0.9))
    K: int = 8

    def __post_init__(self):
        if self.kind not in ("bernoulli", "markov_burst", "counterexample"):
            raise PreconditionError(f"unknown arrival model {self.kind!r}")
        if self.kind in ("bernoulli", "counterexample") and not 0.0 <= self.p <= 1.0:
            raise PreconditionError("arrival probability must lie in [0, 1]")
        if self.batch < 1:
            raise PreconditionError("batch must be positive")
        if self.kind == "markov_burst":
            _check_stochastic(self.P, "arrival transition matrix")
        if self.kind == "counterexample" and self.K < 1:
            raise PreconditionError("K must be positive")

    @property
    def L(self) -> int:
        return self.K if self.kind == "counterexample" else self.batch

    def mean_rate(self) -> float:
        """Long-run arrivals per user per slot."""
        if self.kind == "bernoulli":
            return self.p * self.batch
        if self.kind == "markov_burst":
            return self.batch * stationary_two_state(self.P)
        return self.p * self.K / 2


@dataclass(frozen=True)
class ChannelModel:
    """``iid`` ON/OFF links with parameter ``q``, or ``gilbert_elliott``
    per-link chains (ON in state 1).  Under Gilbert-Elliott, users 1, 3, 5, ...
    in 1-based numbering (queue ids 0, 2, 4, ...) see ``P_near`` and the
    rest see ``P_far``."""

    kind: str
    q: float = 0.75
    P_near: tuple = ((0.833, 0.167), (0.5, 0.5))
    P_far: tuple = ((0.5, 0.5), (0.167, 0.833))

    def __post_init__(self):
        if self.kind not in ("iid", "gilbert_elliott"):
            raise PreconditionError(f"unknown channel model {self.kind!r}")
        if self.kind == "iid" and not 0.0 <= self.q <= 1.0:
            raise PreconditionError("q must lie in [0, 1]")
        if self.kind == "gilbert_elliott":
            _check_stochastic(self.P_near, "P_near")
            _check_stochastic(self.P_far, "P_far")

    def on_probability(self, queue_id: int = 0) -> float:
        if self.kind == "iid":
            return self.q
        return stationary_two_state(self.P_near if queue_id % 2 == 0 else self.P_far)


# -- model state ------------------------------------------------------------

def init_arrival_state(m: ArrivalModel, rng: RngStream, n: int) -> np.ndarray:
    """Initial hidden state: chain states drawn from the stationary law for
    markov_burst, the active-frame flag for counterexample."""
    if m.kind == "counterexample" and n != 2:
        raise PreconditionError("the counterexample arrival pattern needs n == 2")
    if m.kind == "markov_burst":
        pi1 = stationary_two_state(m.P)
        return (rng.random(n) >= pi1).astype(np.int8)  # 0 = state 1 (bursting)
    return np.zeros(n, dtype=np.int8)


def init_channel_state(m: ChannelModel, rng: RngStream, n: int) -> np.ndarray:
    if m.kind == "iid":
        return np.zeros((n, n), dtype=np.int8)
    on = np.array([m.on_probability(i) for i in range(n)])[:, None]
    return (rng.random((n, n)) >= on).astype(np.int8)  # 0 = ON


@numba.njit(cache=True)
def _evolve_chains(state, u, stay0, stay1):
    # state: flat int8 chain states (0 = state 1); u: (T, m) uniforms drawn at
    # the end of each slot; returns (T, m) state occupied during each slot.
    T, m = u.shape
    out = np.empty((T, m), dtype=np.int8)
    for t in range(T):
        for k in range(m):
            s = state[k]
            out[t, k] = s
            if s == 0:
                state[k] = 0 if u[t, k] < stay0[k] else 1
            else:
                state[k] = 1 if u[t, k] < stay1[k] else 0
    return out


def gen_arrivals(m: ArrivalModel, state: np.ndarray, rng: RngStream, n: int,
                 slot: int = 0, T: int | None = None):
    """Arrival counts for slots ``slot .. slot+T-1``.

    Returns ``(counts, state)``; counts has shape ``(n,)`` when ``T`` is
    None and ``(T, n)`` otherwise.  ``state`` is updated in place.
    """
    steps = 1 if T is None else T
    if m.kind == "bernoulli":
        counts = np.where(rng.random((steps, n)) < m.p, m.batch, 0).astype(np.int64)
    elif m.kind == "markov_burst":
        P = np.asarray(m.P, dtype=float)
        u = rng.random((steps, n))
        occupied = _evolve_chains(state, u, np.full(n, P[0, 0]), np.full(n, P[1, 1]))
        counts = np.where(occupied == 0, m.batch, 0).astype(np.int64)
    else:
        if n != 2:
            raise PreconditionError("the counterexample arrival pattern needs n == 2")
        slots = np.arange(slot, slot + steps)
        first = slots % 2 == 0
        draws = rng.random(int(first.sum())) < m.p
        active = np.empty(steps, dtype=bool)
        idx = np.cumsum(first) - 1
        # slots before the first even slot of this call continue the stored frame
        active[:] = bool(state[0])
        active[first] = draws
        has_prev = idx >= 0
        active[~first & has_prev] = draws[idx[~first & has_prev]]
        if steps and first.any():
            state[0] = int(draws[-1])
        counts = np.zeros((steps, 2), dtype=np.int64)
        counts[first & active, 0] = m.K
        counts[~first & active, 1] = m.K
    return (counts[0] if T is None else counts), state


def gen_connectivity(m: ChannelModel, state: np.ndarray, rng: RngStream, n: int,
                     T: int | None = None):
    """Connectivity matrices ``[queue, server]`` for the next slot(s)."""
    steps = 1 if T is None else T
    if m.kind == "iid":
        conn = rng.random((steps, n, n)) < m.q
    else:
        near = np.asarray(m.P_near, dtype=float)
        far = np.asarray(m.P_far, dtype=float)
        rows = np.arange(n) % 2 == 0
        stay0 = np.repeat(np.where(rows, near[0, 0], far[0, 0]), n)
        stay1 = np.repeat(np.where(rows, near[1, 1], far[1, 1]), n)
        flat = state.reshape(-1)
        u = rng.random((steps, n * n))
        occupied = _evolve_chains(flat, u, stay0, stay1)
        state[:] = flat.reshape(n, n)
        conn = (occupied == 0).reshape(steps, n, n)
    return (conn[0] if T is None else conn), state
