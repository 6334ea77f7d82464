"""Upper bound on the delay rate-function for a few settings, with the winning term.

The same numbers come out of `mcsched bound`.
"""
from mcsched.analysis import BoundParams, compute_I_X, compute_upper_bound
from mcsched.traffic import ArrivalModel

for q in (0.5, 0.75):
    print(f"q = {q}: single arrivals give (b+1) I_X with I_X = {compute_I_X(q):.6f}")
    for b in range(4):
        ub = compute_upper_bound(BoundParams(ArrivalModel("bernoulli", p=0.3), q, b))
        print(f"  b={b}: {ub.value:.6f}")

burst = ArrivalModel("markov_burst", batch=5)
print("\nbursts of 5, q = 0.75")
for b in range(5):
    ub = compute_upper_bound(BoundParams(burst, 0.75, b))
    best = min(ub.terms, key=ub.terms.get)
    print(f"  b={b}: {ub.value:.6f}  from {best} {ub.argmin.get(best) or ''}")
