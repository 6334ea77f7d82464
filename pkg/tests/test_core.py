import itertools

import numpy as np
import pytest
from conftest import random_state
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import weight_key as oracle_key

from mcsched.core import (Packet, PreconditionError, Schedule, ScheduleError, SystemState,
                          packet_weight, validate_schedule, weight_key)

arrival_plans = st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, 3).flatmap(lambda L: st.tuples(
        st.just(L), st.lists(st.lists(st.integers(0, L), min_size=n, max_size=n),
                             min_size=1, max_size=6)))))


def build(n, L, plan, serve_rng=None):
    s = SystemState(n, L)
    for counts in plan:
        s.apply_arrivals(counts)
        if serve_rng is not None and s.backlog:
            pk = list(s.packets())
            pick = serve_rng.choice(len(pk), size=min(n, len(pk)) // 2, replace=False)
            s.apply_schedule(Schedule({j: (pk[k].queue_id, pk[k].seq_id)
                                       for j, k in enumerate(pick)}))
        s.advance_slot()
    return s


def test_weight_key_matches_rational_formula():
    for n, L in [(1, 1), (3, 2), (5, 4)]:
        for t_p, i, x in itertools.product(range(3), range(n), range(1, L + 1)):
            p = Packet(t_p, i, x)
            for t in range(t_p, t_p + 3):
                assert weight_key(p, t, n, L) == oracle_key(t_p, i, x, t, n, L)
                assert packet_weight(p, t, n, L) * (L + 1) * (n + 1) == weight_key(p, t, n, L)


def test_weight_key_injective_exhaustive():
    # every (slot, queue, order) triple at a fixed slot gets its own key
    for n, L in [(2, 1), (3, 3), (4, 2)]:
        t = 5
        keys = [weight_key(Packet(tp, i, x), t, n, L)
                for tp in range(t + 1) for i in range(n) for x in range(1, L + 1)]
        assert len(set(keys)) == len(keys)


def test_weight_order_prefers_older_then_earlier_then_lower_index():
    n, L, t = 3, 2, 4
    k = lambda tp, i, x: weight_key(Packet(tp, i, x), t, n, L)  # noqa: E731
    assert k(1, 2, 2) > k(2, 0, 1)
    assert k(2, 2, 1) > k(2, 0, 2)
    assert k(2, 0, 1) > k(2, 1, 1)


def test_weight_key_bad_packets():
    with pytest.raises(PreconditionError):
        weight_key(Packet(0, 3, 1), 0, 3, 1)
    with pytest.raises(PreconditionError):
        weight_key(Packet(0, 0, 2), 0, 3, 1)
    with pytest.raises(PreconditionError):
        weight_key(Packet(5, 0, 1), 4, 3, 1)


def test_oldest_trivial_cases():
    s = SystemState(3, 1)
    assert s.oldest(5) == []
    s.apply_arrivals([1, 0, 0])
    s.advance_slot()
    s.apply_arrivals([1, 0, 0])
    s.advance_slot()
    s.apply_arrivals([1, 0, 0])
    assert s.oldest(2) == list(s.queues[0])[:2]
    with pytest.raises(PreconditionError):
        s.oldest(-1)


@settings(max_examples=150, deadline=None)
@given(arrival_plans, st.integers(0, 25), st.integers(0, 2**32 - 1))
def test_oldest_equals_full_sort(plan, k, seed):
    n, (L, rows) = plan
    s = build(n, L, rows, np.random.default_rng(seed))
    ref = sorted(s.packets(), key=lambda p: -s.key(p))[:k]
    assert s.oldest(k) == ref


def test_apply_arrivals_examples():
    s = SystemState(2, 2, slot=7)
    before = s.backlog
    assert s.apply_arrivals([0, 0]) == []
    assert s.backlog == before
    new = s.apply_arrivals([2, 0])
    assert [p.ident for p in new] == [(7, 0, 1), (7, 0, 2)]
    assert s.key(new[0]) > s.key(new[1])
    assert s.queue_lengths().tolist() == [2, 0]
    with pytest.raises(PreconditionError):
        s.apply_arrivals([3, 0])
    with pytest.raises(PreconditionError):
        s.apply_arrivals([1])


@settings(max_examples=150, deadline=None)
@given(arrival_plans, st.integers(0, 2**32 - 1))
def test_fifo_weights_strictly_decreasing_and_injective(plan, seed):
    n, (L, rows) = plan
    s = build(n, L, rows, np.random.default_rng(seed))
    keys = [s.key(p) for p in s.packets()]
    assert len(set(keys)) == len(keys)
    for q in s.queues:
        ks = [s.key(p) for p in q]
        assert all(a > b for a, b in zip(ks, ks[1:]))


def test_apply_schedule_examples():
    s = SystemState(2, 2)
    s.apply_arrivals([2, 0])
    assert s.apply_schedule(Schedule()) == []
    a, b = s.queues[0]
    served = s.apply_schedule(Schedule({0: (0, a.seq_id), 1: (0, b.seq_id)}))
    assert served == [a, b] and s.backlog == 0


def test_apply_schedule_errors():
    s = SystemState(2, 1)
    s.apply_arrivals([1, 1])
    p = s.queues[0][0]
    with pytest.raises(ScheduleError):
        s.apply_schedule(Schedule({0: (0, p.seq_id), 1: (0, p.seq_id)}))
    with pytest.raises(ScheduleError):
        s.apply_schedule(Schedule({0: (1, p.seq_id)}))
    with pytest.raises(ScheduleError):
        s.apply_schedule(Schedule({0: (0, 999)}))


def test_allocation_only_entries_serve_nothing():
    s = SystemState(2, 1)
    s.apply_arrivals([1, 0])
    assert s.apply_schedule(Schedule({0: (1, None)})) == []
    assert s.backlog == 1


@settings(max_examples=100, deadline=None)
@given(arrival_plans, st.integers(0, 2**32 - 1))
def test_conservation(plan, seed):
    n, (L, rows) = plan
    rng = np.random.default_rng(seed)
    s = SystemState(n, L)
    for counts in rows:
        b0 = s.backlog
        s.apply_arrivals(counts)
        assert s.backlog == b0 + sum(counts)
        pk = list(s.packets())
        pick = rng.choice(len(pk), size=min(n, len(pk)), replace=False) if pk else []
        sched = Schedule({j: (pk[k].queue_id, pk[k].seq_id) for j, k in enumerate(pick)})
        b1 = s.backlog
        served = s.apply_schedule(sched)
        assert s.backlog == b1 - len(sched) == b1 - len(served)
        s.advance_slot()


def test_advance_slot(rng):
    s = SystemState(3, 1, slot=5)
    s.advance_slot()
    assert s.slot == 6 and s.backlog == 0
    s = random_state(rng, 3, slots=3, p=0.9)
    W0 = s.hol_delays()
    keys0 = {p.seq_id: s.key(p) for p in s.packets()}
    s.advance_slot()
    nonempty = s.queue_lengths() > 0
    assert (s.hol_delays()[nonempty] == W0[nonempty] + 1).all()
    scale = (s.L + 1) * (s.n + 1)
    for p in s.packets():
        assert packet_weight(p, s.slot, s.n, s.L) - keys0[p.seq_id] / scale == 1


@settings(max_examples=100, deadline=None)
@given(arrival_plans, st.integers(0, 2**32 - 1))
def test_max_hol_delay_is_age_of_oldest(plan, seed):
    n, (L, rows) = plan
    s = build(n, L, rows, np.random.default_rng(seed))
    if s.backlog:
        assert s.max_hol_delay() == s.slot - min(p.arrival_slot for p in s.packets())
    else:
        assert s.max_hol_delay() == 0


def test_delay_accessors():
    s = SystemState(2, 2)
    s.apply_arrivals([2, 0])
    s.advance_slot()
    s.apply_arrivals([1, 0])
    s.advance_slot()
    assert s.delay(0, 1) == 2 and s.delay(0, 3) == 1
    assert s.hol_delay(1) == 0


def test_validate_schedule():
    s = SystemState(2, 1)
    s.apply_arrivals([1, 1])
    p0, p1 = s.queues[0][0], s.queues[1][0]
    conn = np.array([[1, 0], [1, 1]])
    validate_schedule(s, conn, Schedule({0: (0, p0.seq_id), 1: (1, p1.seq_id)}))
    with pytest.raises(ScheduleError):
        validate_schedule(s, conn, Schedule({1: (0, p0.seq_id)}))
    with pytest.raises(ScheduleError):
        validate_schedule(s, conn, Schedule({0: (1, p0.seq_id)}))
    with pytest.raises(PreconditionError):
        validate_schedule(s, np.ones((3, 3)), Schedule())
