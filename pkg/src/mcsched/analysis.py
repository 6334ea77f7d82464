"""
Delay statistics, empirical rate-function fits, the large-deviations upper
bound on the rate-function, and stability diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .core import PreconditionError, SystemState
from .traffic import ArrivalModel, stationary_two_state

__all__ = [
    "InsufficientDataError",
    "UnsupportedModelError",
    "DelayStats",
    "record_slot",
    "RateEstimate",
    "rate_function_estimate",
    "compute_I_X",
    "cgf",
    "BoundParams",
    "compute_I_A",
    "UpperBound",
    "compute_upper_bound",
    "StabilityVerdict",
    "stability_metric",
    "throughput_region_n2",
]


class InsufficientDataError(ValueError):
    pass


class UnsupportedModelError(ValueError):
    pass


# -- delay statistics --------------------------------------------------------

@dataclass
class DelayStats:
    """Exceedance statistics of the largest HOL delay W(t).

    ``w_hist[w]`` counts recorded slots with W(t) == w; the last bin
    collects everything at or above its index.  Exceedance counts for any
    threshold below that index follow from the histogram.
    """

    thresholds: tuple[int, ...] = (0, 1, 2)
    warmup: int = 0
    stride: int = 100
    hist_size: int = 4096
    w_hist: np.ndarray = field(default=None)
    backlog_trace: list = field(default_factory=list)
    horizon: int = 0
    max_W_seen: int = 0

    def __post_init__(self):
        if self.w_hist is None:
            self.w_hist = np.zeros(self.hist_size + 1, dtype=np.int64)
        if max(self.thresholds, default=0) >= self.w_hist.size - 1:
            raise PreconditionError("threshold beyond histogram range")

    @property
    def recorded(self) -> int:
        return int(self.w_hist.sum())

    def exceed_count(self, b: int) -> int:
        if b + 1 >= self.w_hist.size:
            raise PreconditionError("threshold beyond histogram range")
        return int(self.w_hist[b + 1:].sum())

    @property
    def exceed_counts(self) -> dict[int, int]:
        return {b: self.exceed_count(b) for b in self.thresholds}

    def p_hat(self, b: int) -> float:
        r = self.recorded
        return self.exceed_count(b) / r if r else 0.0

    def merge(self, other: "DelayStats") -> "DelayStats":
        """Pool two runs of the same cell (order independent)."""
        if self.w_hist.size != other.w_hist.size:
            raise PreconditionError("histogram sizes differ")
        return DelayStats(
            thresholds=tuple(sorted(set(self.thresholds) | set(other.thresholds))),
            warmup=self.warmup, stride=self.stride, hist_size=self.hist_size,
            w_hist=self.w_hist + other.w_hist,
            backlog_trace=list(self.backlog_trace),
            horizon=self.horizon + other.horizon,
            max_W_seen=max(self.max_W_seen, other.max_W_seen),
        )

    def backlog_array(self) -> np.ndarray:
        """(slot, backlog) pairs as a 2-column array."""
        if not self.backlog_trace:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.backlog_trace, dtype=np.int64)


def record_slot(stats: DelayStats, s: SystemState) -> DelayStats:
    """Record W(t) for the current slot (call after arrivals, before service)."""
    W = s.max_hol_delay()
    stats.horizon += 1
    if s.slot >= stats.warmup:
        stats.w_hist[min(W, stats.w_hist.size - 1)] += 1
        stats.max_W_seen = max(stats.max_W_seen, W)
    if s.slot % stats.stride == 0:
        stats.backlog_trace.append((s.slot, s.backlog))
    return stats


# -- empirical rate-function --------------------------------------------------

@dataclass
class RateEstimate:
    slope: float
    stderr: float
    intercept: float
    used: list
    censored: list

    def __float__(self) -> float:
        return self.slope


def rate_function_estimate(probs: Mapping[int, float], min_points: int = 3) -> RateEstimate:
    """Least-squares slope of -log P(W > b) against n.

    Cells with a zero estimate are censored (the true value is below one
    over the number of recorded slots) and left out of the fit.
    """
    used = sorted(n for n, p in probs.items() if p > 0)
    censored = sorted(n for n, p in probs.items() if not p > 0)
    if len(used) < min_points:
        raise InsufficientDataError(
            f"need {min_points} cells with nonzero probability, have {len(used)}")
    x = np.asarray(used, dtype=float)
    y = -np.log([probs[n] for n in used])
    fit = stats.linregress(x, y)
    stderr = 0.0 if not np.isfinite(fit.stderr) else float(fit.stderr)
    return RateEstimate(float(fit.slope), stderr, float(fit.intercept), used, censored)


# -- large-deviations quantities ------------------------------------------------

def compute_I_X(q: float) -> float:
    """Decay rate log(1/(1-q)) of one queue seeing no ON link in a slot."""
    if not 0.0 < q < 1.0:
        raise PreconditionError("q must lie in (0, 1)")
    return -math.log1p(-q)


def cgf(model: ArrivalModel, t: int, theta):
    """log E[exp(theta * A_i(-t+1, 0))] for one user over t slots.

    ``theta`` may be a scalar or an array of nonnegative values.
    """
    if t < 1:
        raise PreconditionError("t must be a positive integer")
    if model.kind == "bernoulli":
        # `batch` packets with probability p, independently each slot
        p, L = model.p, model.batch
        if p == 0.0:
            return 0.0 * np.asarray(theta) if np.ndim(theta) else 0.0
        out = t * np.logaddexp(math.log1p(-p) if p < 1 else -np.inf,
                               math.log(p) + np.asarray(theta, dtype=float) * L)
        return out if np.ndim(theta) else float(out)
    if model.kind == "markov_burst":
        return _markov_cgf(model, t, theta)
    raise UnsupportedModelError(f"no cumulant generating function for {model.kind!r}")


def _markov_cgf(model: ArrivalModel, t: int, theta):
    # pi D (P D)^(t-1) 1 with D = diag(e^{theta*batch}, 1).  Factor e^{theta*batch}
    # out of every D and renormalise each step so nothing overflows.
    (p00, p01), (p10, p11) = model.P
    pi1 = stationary_two_state(model.P)
    vec = np.ndim(theta) > 0
    th = np.asarray(theta, dtype=float) if vec else float(theta)
    a = np.exp(-th * model.batch) if vec else math.exp(-th * model.batch)
    v0, v1 = 1.0, a
    log_scale = 0.0
    for _ in range(t - 1):
        v0, v1 = p00 * v0 + p01 * v1, a * (p10 * v0 + p11 * v1)
        s = v0 + v1
        v0, v1 = v0 / s, v1 / s
        log_scale = log_scale + (np.log(s) if vec else math.log(s))
    tail = pi1 * v0 + (1 - pi1) * v1
    return t * th * model.batch + log_scale + (np.log(tail) if vec else math.log(tail))


def _log_prob_full(model: ArrivalModel, t: int) -> float:
    # log P(A_i over t slots equals L t), the theta -> infinity limit
    if model.kind == "bernoulli":
        return -math.inf if model.p == 0 else t * math.log(model.p)
    if model.kind == "markov_burst":
        P = np.asarray(model.P, dtype=float)
        if P[0, 0] == 0 and t > 1:
            return -math.inf
        return math.log(stationary_two_state(P)) + (t - 1) * (math.log(P[0, 0]) if t > 1 else 0.0)
    raise UnsupportedModelError(f"no cumulant generating function for {model.kind!r}")


@dataclass
class BoundParams:
    arrival: ArrivalModel
    q: float
    b: int
    t_max: int = 200
    theta_grid: np.ndarray = field(default_factory=lambda: np.geomspace(1e-4, 60.0, 241))

    @property
    def L(self) -> int:
        return self.arrival.L

    def __post_init__(self):
        if self.b < 0:
            raise PreconditionError("b must be a nonnegative integer")
        if (self.theta_grid <= 0).any():
            raise PreconditionError("theta grid must be positive")
        if self.arrival.kind not in ("bernoulli", "markov_burst"):
            raise UnsupportedModelError(f"no cumulant generating function for {self.arrival.kind!r}")


def compute_I_A(bp: BoundParams, t: int, x: float) -> float:
    """sup over theta > 0 of theta*(t+x) - cgf(t, theta).

    Coarse geometric grid, then golden-section refinement around the best
    grid point (the objective is concave).  Returns inf for x > (L-1)t and
    the exact limit -log P(A = Lt) at x = (L-1)t.
    """
    L = bp.L
    if t < 1 or x < 0:
        raise PreconditionError("need integer t >= 1 and x >= 0")
    level = t + x
    top = (L - 1) * t
    if x > top + 1e-12:
        return math.inf
    if abs(x - top) <= 1e-12:
        return -_log_prob_full(bp.arrival, t)
    if level <= t * bp.arrival.mean_rate():
        return 0.0

    def f(th):
        return th * level - cgf(bp.arrival, t, th)

    def neg(th):
        return -f(th)

    grid = bp.theta_grid
    vals = grid * level - cgf(bp.arrival, t, grid)
    k = int(np.argmax(vals))
    if k == 0:
        res = optimize.minimize_scalar(neg, bounds=(0.0, grid[1]), method="bounded",
                                       options={"xatol": 1e-14})
        return max(float(vals[0]), float(-res.fun), 0.0)
    if k == grid.size - 1:
        # maximiser beyond the grid; f is concave, so doubling finds a bracket
        hi = grid[k]
        while f(2 * hi) > f(hi):
            hi *= 2
        bracket = (hi / 2, hi, 2 * hi)
    else:
        bracket = (grid[k - 1], grid[k], grid[k + 1])
    th = optimize.golden(neg, brack=bracket, tol=1e-12)
    return max(f(th), float(vals[k]), 0.0)


@dataclass
class UpperBound:
    value: float
    L: int
    b: int
    terms: dict
    argmin: dict
    t_max: int
    tail_monotone: bool

    def __float__(self) -> float:
        return self.value


def compute_upper_bound(bp: BoundParams) -> UpperBound:
    """The bound I*_0(b) on the rate-function of any policy.

    For L > 1 this is the minimum of (b+1) I_X, the smallest
    inf_{t > t_{b-c}} I_A(t, b-c) + c I_X over c = 0..b, and
    I_A(t_{b-c}, b-c) + (c+1) I_X over the c for which t_{b-c} = (b-c)/(L-1)
    is a positive integer.  The inner infimum runs over integer t up to
    ``t_max``; ``tail_monotone`` reports whether I_A was nondecreasing in t
    over the last quarter of that range for every c.
    """
    IX = compute_I_X(bp.q)
    b, L = bp.b, bp.L
    first = (b + 1) * IX
    if L == 1:
        return UpperBound(first, L, b, {"disconnect": first}, {}, bp.t_max, True)

    second = math.inf
    second_arg = None
    tail_ok = True
    for c in range(b + 1):
        x = b - c
        t_x = x / (L - 1)
        t_start = math.floor(t_x) + 1
        vals = [compute_I_A(bp, t, x) for t in range(t_start, max(t_start, bp.t_max) + 1)]
        tail = vals[-max(2, len(vals) // 4):]
        tail_ok &= all(a <= b_ + 1e-9 for a, b_ in zip(tail, tail[1:]))
        k = int(np.argmin(vals))
        cand = vals[k] + c * IX
        if cand < second:
            second, second_arg = cand, {"c": c, "t": t_start + k}

    third = math.inf
    third_arg = None
    for c in range(b + 1):
        x = b - c
        if x > 0 and x % (L - 1) == 0:
            cand = compute_I_A(bp, x // (L - 1), x) + (c + 1) * IX
            if cand < third:
                third, third_arg = cand, {"c": c, "t": x // (L - 1)}

    terms = {"disconnect": first, "burst_then_disconnect": second, "full_burst": third}
    argmin = {"burst_then_disconnect": second_arg, "full_burst": third_arg}
    return UpperBound(min(first, second, third), L, b, terms, argmin, bp.t_max, tail_ok)


# -- stability ---------------------------------------------------------------------

@dataclass
class StabilityVerdict:
    slope: float
    stderr: float
    returns: int
    verdict: str


def stability_metric(stats_or_trace, warmup: int | None = None, drift_threshold: float = 0.01,
                     near_zero: int = 50, min_returns: int = 100,
                     min_samples: int = 100) -> StabilityVerdict:
    """Backlog drift per slot and a stable/unstable/inconclusive verdict.

    Accepts DelayStats or an array of (slot, backlog) rows.  Unstable: the
    least-squares drift exceeds ``drift_threshold`` by three standard
    errors.  Stable: otherwise, with at least ``min_returns`` post-warmup
    samples below ``near_zero``.
    """
    if isinstance(stats_or_trace, DelayStats):
        arr = stats_or_trace.backlog_array()
        warmup = stats_or_trace.warmup if warmup is None else warmup
    else:
        arr = np.asarray(stats_or_trace, dtype=float)
        if arr.ndim == 1:
            arr = np.column_stack([np.arange(arr.size), arr])
    warmup = warmup or 0
    arr = arr[arr[:, 0] >= warmup]
    if arr.shape[0] < min_samples:
        raise InsufficientDataError(f"backlog trace has {arr.shape[0]} samples, need {min_samples}")
    x = arr[:, 0].astype(float)
    y = arr[:, 1].astype(float)
    fit = stats.linregress(x, y)
    stderr = 0.0 if not np.isfinite(fit.stderr) else float(fit.stderr)
    slope = float(fit.slope) if np.isfinite(fit.slope) else 0.0
    returns = int((y < near_zero).sum())
    if slope - 3 * stderr > drift_threshold:
        verdict = "unstable"
    elif returns >= min_returns:
        verdict = "stable"
    else:
        verdict = "inconclusive"
    return StabilityVerdict(slope, stderr, returns, verdict)


def throughput_region_n2(q: float) -> Callable[[Sequence[float]], bool]:
    """Membership test for the two-user optimal throughput region."""
    if not 0.0 < q < 1.0:
        raise PreconditionError("q must lie in (0, 1)")

    def inside(lam) -> bool:
        l1, l2 = lam
        return (0 <= l1 <= 2 * q and 0 <= l2 <= 2 * q
                and l1 + l2 <= 2 * (2 * q - q * q) + 1e-12)

    return inside
