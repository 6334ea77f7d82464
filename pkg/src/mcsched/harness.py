"""
Experiment runner: sweeps over (policy, n, seed, replication) cells, CSV and
manifest output, plot data, per-slot oracle sweeps and timing.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import InsufficientDataError, rate_function_estimate
from .config import ExperimentConfig
from .core import SystemState
from .engine import CellResult, TraceSource, simulate, simulate_reference
from .policies import (PolicyKind, PolicySpec, make_policy, mwf_condition_check,
                       opf_condition_check)

__all__ = ["RunResult", "MissingCellsError", "run_experiment", "figure_sweep", "verify",
           "VerifyReport", "bench", "saturated_state", "loglog_slope"]

OPF_KINDS = (PolicyKind.DWM, PolicyKind.DWM_N, PolicyKind.HYBRID_DWMN_MWS)


class MissingCellsError(LookupError):
    def __init__(self, cells):
        self.cells = list(cells)
        super().__init__("missing runs: " + ", ".join(f"{p} n={n}" for p, n in self.cells))


@dataclass
class RunResult:
    config: ExperimentConfig
    cells: list = field(default_factory=list)  # CellResult, sorted by key

    def pooled(self) -> dict:
        """(policy label, n) -> DelayStats pooled over seeds and replications."""
        out: dict = {}
        for c in self.cells:
            key = (c.spec.label, c.n)
            out[key] = c.stats if key not in out else out[key].merge(c.stats)
        return out

    def get(self, spec: PolicySpec, n: int, seed=None, replication=0) -> CellResult:
        for c in self.cells:
            if c.spec == spec and c.n == n and c.replication == replication and (
                    seed is None or c.seed == seed):
                return c
        raise MissingCellsError([(spec.label, n)])


def _run_cell(args):
    cfg, n, seed, rep = args
    kw = dict(warmup=cfg.warmup, thresholds=tuple(cfg.thresholds), stride=cfg.stride)
    sim = simulate_reference if cfg.engine == "reference" else simulate
    if cfg.coupled:
        res = sim(cfg.policies, n, cfg.arrival, cfg.channel, cfg.horizon, seed, rep, **kw)
    else:
        res = []
        for k, sp in enumerate(cfg.policies):
            res += sim([sp], n, cfg.arrival, cfg.channel, cfg.horizon, seed, rep, salt=k + 1, **kw)
    for r in res:
        r.extra = {}  # drop large state objects before they cross process boundaries
        r.stats.horizon = cfg.horizon
    return res


def run_experiment(cfg: ExperimentConfig, threads: int = 1, write: bool = True) -> RunResult:
    """Run every cell of ``cfg``; write CSVs and the manifest to ``cfg.output_dir``."""
    cfg.validate()
    jobs = [(cfg, n, seed, rep) for n in cfg.n_values for seed in cfg.seeds
            for rep in range(cfg.replications)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_run_cell, jobs))
    else:
        parts = [_run_cell(j) for j in jobs]
    order = {sp: i for i, sp in enumerate(cfg.policies)}
    cells = sorted((c for p in parts for c in p),
                   key=lambda c: (c.n, c.seed, c.replication, order[c.spec]))
    result = RunResult(cfg, cells)
    if write:
        write_outputs(result)
    return result


def _versions() -> dict:
    import numba
    import scipy
    return {"mcsched": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def write_outputs(result: RunResult) -> dict:
    cfg = result.config
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pooled = result.pooled()
    paths = {"exceed": out / f"{cfg.name}_exceed.csv", "backlog": out / f"{cfg.name}_backlog.csv",
             "manifest": out / f"{cfg.name}_manifest.json"}
    with open(paths["exceed"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "n", "b", "horizon", "exceed_count", "p_hat", "censored_flag"])
        for sp in cfg.policies:
            for n in cfg.n_values:
                st = pooled.get((sp.label, n))
                if st is None:
                    continue
                for b in cfg.thresholds:
                    cnt = st.exceed_count(b)
                    w.writerow([sp.label, n, b, st.horizon, cnt, repr(st.p_hat(b)),
                                int(cnt == 0)])
    # backlog series of the first (seed, replication) of every cell
    with open(paths["backlog"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "n", "slot", "backlog"])
        for sp in cfg.policies:
            for n in cfg.n_values:
                try:
                    c = result.get(sp, n, cfg.seeds[0], 0)
                except MissingCellsError:
                    continue
                for slot, b in c.stats.backlog_trace:
                    w.writerow([sp.label, n, slot, b])
    manifest = {
        "name": cfg.name,
        "config_sha256": cfg.digest(),
        "config": cfg.to_text(),
        "versions": _versions(),
        "seeds": list(cfg.seeds),
        "replications": cfg.replications,
        "cells": [{"policy": c.spec.label, "n": c.n, "seed": c.seed,
                   "replication": c.replication, "trace_sha256": c.trace_digest,
                   "recorded_slots": c.stats.recorded, "max_W": c.stats.max_W_seen}
                  for c in result.cells],
        "outputs": {k: str(v.name) for k, v in paths.items() if k != "manifest"},
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


# -- plot data ---------------------------------------------------------------------

def figure_sweep(cfg: ExperimentConfig, mode: str, result: RunResult | None = None,
                 b: int | None = None, n: int | None = None, threads: int = 1) -> dict:
    """Write vs_n or vs_b plot data (gnuplot text and CSV); returns file paths.

    vs_n: P(W > b) against n per policy at a fixed b (default: largest
    threshold) with the fitted slope.  vs_b: P(W > b) against b per policy at
    a fixed n (default: first n value).
    """
    if mode not in ("vs_n", "vs_b"):
        raise ValueError("mode must be vs_n or vs_b")
    if result is None:
        result = run_experiment(cfg, threads=threads)
    pooled = result.pooled()
    missing = [(sp.label, m) for sp in cfg.policies for m in cfg.n_values
               if (sp.label, m) not in pooled]
    if missing:
        raise MissingCellsError(missing)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "vs_n":
        b = max(cfg.thresholds) if b is None else b
        stem = out / f"{cfg.name}_vs_n_b{b}"
        rows, blocks = [], []
        for sp in cfg.policies:
            probs = {m: pooled[(sp.label, m)].p_hat(b) for m in cfg.n_values}
            try:
                est = rate_function_estimate(probs)
                slope, se = est.slope, est.stderr
            except InsufficientDataError:
                slope = se = math.nan
            lines = [f"# {sp.label} slope={slope:.6g} stderr={se:.6g}", "# n p_hat censored"]
            for m in cfg.n_values:
                p = probs[m]
                rows.append([sp.label, m, b, repr(p), int(p == 0), repr(slope), repr(se)])
                lines.append(f"{m} {p!r} {int(p == 0)}")
            blocks.append("\n".join(lines))
        header = ["policy", "n", "b", "p_hat", "censored_flag", "slope", "slope_stderr"]
    else:
        n = cfg.n_values[0] if n is None else n
        if n not in cfg.n_values:
            raise MissingCellsError([(sp.label, n) for sp in cfg.policies])
        stem = out / f"{cfg.name}_vs_b_n{n}"
        rows, blocks = [], []
        for sp in cfg.policies:
            st = pooled[(sp.label, n)]
            lines = [f"# {sp.label} n={n}", "# b p_hat censored"]
            for bb in cfg.thresholds:
                p = st.p_hat(bb)
                rows.append([sp.label, n, bb, repr(p), int(p == 0)])
                lines.append(f"{bb} {p!r} {int(p == 0)}")
            blocks.append("\n".join(lines))
        header = ["policy", "n", "b", "p_hat", "censored_flag"]
    csv_path, dat_path = stem.with_suffix(".csv"), stem.with_suffix(".dat")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    # gnuplot: one data block per policy, addressed with `index`
    dat_path.write_text("\n\n\n".join(blocks) + "\n")
    return {"csv": csv_path, "dat": dat_path}


# -- oracle sweeps -----------------------------------------------------------------

@dataclass
class VerifyReport:
    check: str
    slots: int = 0
    violations: dict = field(default_factory=dict)  # label -> count
    first_violation: dict = field(default_factory=dict)  # label -> (n, seed, slot)

    @property
    def total(self) -> int:
        return sum(self.violations.values())

    def lines(self) -> list[str]:
        return [f"{lab}: {v} violations / {self.slots} slots"
                for lab, v in self.violations.items()]


def verify(cfg: ExperimentConfig, check: str, M: int | None = None) -> VerifyReport:
    """Slot-by-slot oracle sweep over every (n, seed, replication).

    opf / mwf check each policy's decision on the state it was made on.
    dominance checks that the cumulative served set of every OPF policy in
    the config contains that of every FBS / perfect-matching policy at the
    end of every slot (policies share traces).
    """
    if check not in ("opf", "mwf", "dominance"):
        raise ValueError("check must be opf, mwf or dominance")
    cfg.validate()
    rep = VerifyReport(check)
    specs = list(cfg.policies)
    if check == "dominance":
        big = [sp for sp in specs if sp.kind in OPF_KINDS]
        small = [sp for sp in specs if sp.kind in (PolicyKind.FBS, PolicyKind.PERFECT_MATCHING)]
        if not big or not small:
            raise ValueError("dominance needs an OPF policy and an FBS or perfect-matching policy")
        for a in big:
            for s in small:
                rep.violations[f"{a.label} >= {s.label}"] = 0
    else:
        for sp in specs:
            rep.violations[sp.label] = 0

    for n in cfg.n_values:
        for seed in cfg.seeds:
            for r in range(cfg.replications):
                served_sets = [set() for _ in specs]

                def on_slot(k, state, conn, sched, served, n=n, seed=seed):
                    sp = specs[k]
                    if check == "opf":
                        ok = opf_condition_check(state, conn, sched)
                        _tally(rep, sp.label, ok, (n, seed, state.slot))
                    elif check == "mwf":
                        ok = mwf_condition_check(state, conn, sched, M)
                        _tally(rep, sp.label, ok, (n, seed, state.slot))
                    else:
                        served_sets[k].update(p.ident for p in served)
                        if k == len(specs) - 1:
                            for a in big:
                                for s in small:
                                    ok = served_sets[specs.index(s)] <= served_sets[specs.index(a)]
                                    _tally(rep, f"{a.label} >= {s.label}", ok,
                                           (n, seed, state.slot))

                simulate_reference(specs, n, cfg.arrival, cfg.channel, cfg.horizon, seed, r,
                                   warmup=0, thresholds=tuple(cfg.thresholds),
                                   stride=cfg.stride, on_slot=on_slot)
                rep.slots += cfg.horizon
    return rep


def _tally(rep: VerifyReport, label: str, ok: bool, where) -> None:
    if not ok:
        rep.violations[label] += 1
        rep.first_violation.setdefault(label, where)


# -- timing --------------------------------------------------------------------------

def saturated_state(cfg: ExperimentConfig, n: int, seed: int, depth: int | None = None):
    """A state in which every queue holds at least ``depth`` (default n)
    packets, built from the configured arrival model, plus one connectivity
    matrix from the configured channel model."""
    depth = n if depth is None else depth
    src = TraceSource(cfg.arrival, cfg.channel, n, seed)
    s = SystemState(n, cfg.arrival.L)
    rng = np.random.default_rng(seed)
    while s.queue_lengths().min() < depth:
        a, _ = src.next_chunk(1)
        counts = np.maximum(a[0], (rng.random(n) < 0.5).astype(np.int64))
        s.apply_arrivals(np.minimum(counts, cfg.arrival.L))
        s.advance_slot()
    _, conn = src.next_chunk(1)
    return s, conn[0]


def loglog_slope(ns, secs) -> float:
    return float(np.polyfit(np.log(ns), np.log(secs), 1)[0])


def bench(cfg: ExperimentConfig, reps: int = 5, min_time: float = 0.05) -> dict:
    """Per-slot decision time (seconds, best of ``reps``) of the object-level
    policies on saturated states, for every policy and n in ``cfg``.

    Returns {label: {"n": [...], "seconds": [...], "slope": log-log slope}}.
    """
    out = {}
    seed = cfg.seeds[0]
    states = {n: saturated_state(cfg, n, seed) for n in cfg.n_values}
    for sp in cfg.policies:
        ns, secs = [], []
        for n in cfg.n_values:
            s, c = states[n]
            best = math.inf
            for _ in range(reps):
                pol = make_policy(sp, n, cfg.arrival.L)
                k = 0
                t0 = time.perf_counter()
                while True:
                    pol.decide(s, c, [])
                    k += 1
                    el = time.perf_counter() - t0
                    if el >= min_time:
                        break
                best = min(best, el / k)
            ns.append(n)
            secs.append(best)
        slope = loglog_slope(ns, secs) if len(ns) >= 2 else math.nan
        out[sp.label] = {"n": ns, "seconds": secs, "slope": slope}
    return out


def write_bench(cfg: ExperimentConfig, res: dict) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.name}_bench.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "n", "seconds_per_slot", "loglog_slope"])
        for lab, r in res.items():
            for n, sec in zip(r["n"], r["seconds"]):
                w.writerow([lab, n, f"{sec:.6e}", f"{r['slope']:.4f}"])
    return path
