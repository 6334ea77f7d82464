"""I_A(t, x) for bursty and Bernoulli arrivals, against the closed form where one exists."""
import numpy as np

from mcsched.analysis import BoundParams, compute_I_A
from mcsched.traffic import ArrivalModel

bern = BoundParams(ArrivalModel("bernoulli", p=0.3, batch=3), 0.75, 0)
p, L = 0.3, 3
print("Bernoulli batches of 3, p = 0.3")
print("  t    x     I_A        t*KL(a||p)")
for t in (1, 4, 10):
    for x in np.linspace(0, (L - 1) * t, 5):
        a = (t + x) / (L * t)
        kl = 0.0 if a <= p else t * (a * np.log(a / p) + ((1 - a) * np.log((1 - a) / (1 - p))
                                                           if a < 1 else 0.0))
        print(f"{t:>3} {x:5.1f}  {compute_I_A(bern, t, x):9.6f}  {kl:9.6f}")

burst = BoundParams(ArrivalModel("markov_burst", batch=5), 0.75, 0)
print("\nON/OFF bursts of 5 (mean rate 5/6), x = 0..3")
for t in (1, 5, 20):
    row = " ".join(f"{compute_I_A(burst, t, x):7.3f}" for x in (0, 1, 2, 3))
    print(f"  t={t:>2}: {row}")
