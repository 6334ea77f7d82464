"""Packet weights and the two matchings behind DWM and DWM-n on a small state.

Run: python3 demos/01_matching_and_weights.py
"""
import numpy as np

from mcsched.core import SystemState
from mcsched.policies import dwm_schedule, dwmn_schedule, hybrid_dwmn_mws_schedule

n, L = 3, 2
s = SystemState(n, L)
for counts in ([2, 0, 1], [0, 1, 0], [1, 2, 0]):
    s.apply_arrivals(counts)
    s.advance_slot()

print(f"slot {s.slot}, queue lengths {s.queue_lengths().tolist()}")
print("packets, heaviest first:")
for p in s.oldest(s.backlog):
    print(f"  queue {p.queue_id}  arrived {p.arrival_slot}  order {p.slot_order}  "
          f"age {s.slot - p.arrival_slot}  key {s.key(p)}")

# server 0 only reaches queue 0; the other two reach everything but queue 0.
# Two of the three oldest packets sit in queue 0, so DWM-n leaves a server idle.
conn = np.array([[1, 0, 0], [0, 1, 1], [0, 1, 1]], dtype=bool)
for name, fn in (("DWM", dwm_schedule), ("DWM-n", dwmn_schedule),
                 ("hybrid", hybrid_dwmn_mws_schedule)):
    sched = fn(s, conn)
    pairs = ", ".join(f"server {j} -> queue {sched.queue_of(j)}" for j in range(n)
                      if sched.queue_of(j) is not None)
    print(f"{name:>7}: {pairs}")
