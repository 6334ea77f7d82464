"""Command line entry point (``mcsched``)."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import BoundParams, compute_upper_bound
from .config import ConfigError, load_config
from .core import PreconditionError
from .traffic import ArrivalModel

EXIT_OK, EXIT_RUN, EXIT_USAGE = 0, 1, 2


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, action="append",
                   help="override the config seeds (repeatable)")
    p.add_argument("--out", help="override the config output directory")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes over (n, seed, replication) cells")
    return p


def build_parser() -> argparse.ArgumentParser:
    g = _global_flags()
    ap = argparse.ArgumentParser(prog="mcsched", parents=[g],
                                 description="multi-channel scheduling simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[g], help="run an experiment config")
    r.add_argument("config")

    s = sub.add_parser("sweep", parents=[g], help="write vs_n / vs_b plot data")
    s.add_argument("config")
    s.add_argument("--mode", choices=["vs_n", "vs_b"], required=True)
    s.add_argument("--b", type=int, help="threshold for vs_n (default: largest)")
    s.add_argument("--n", type=int, help="system size for vs_b (default: first)")

    b = sub.add_parser("bound", parents=[g], help="upper bound on the rate-function")
    b.add_argument("--L", type=int, required=True)
    b.add_argument("--q", type=float, required=True)
    b.add_argument("--b", type=int, required=True)
    b.add_argument("--arrival-model", choices=["bernoulli", "markov_burst"],
                   help="arrival model for L > 1 (default markov_burst)")
    b.add_argument("--p", type=float, default=0.5, help="bernoulli arrival probability")
    b.add_argument("--P", default="0.5 0.5; 0.1 0.9",
                   help="markov_burst transition matrix, rows separated by ';'")
    b.add_argument("--t-max", type=int, default=200)

    v = sub.add_parser("verify", parents=[g], help="slot-by-slot condition checks")
    v.add_argument("config")
    v.add_argument("--check", choices=["opf", "mwf", "dominance"], required=True)
    v.add_argument("--M", type=int, help="MWF packet index (default n)")

    be = sub.add_parser("bench", parents=[g], help="per-slot decision timing")
    be.add_argument("config")
    be.add_argument("--reps", type=int, default=5)
    return ap


def _load(args):
    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = load_config(path)
    if args.seed:
        cfg = replace(cfg, seeds=list(args.seed))
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    return cfg.validate()


def _bound(args) -> int:
    from .config import _matrix
    model = args.arrival_model or ("bernoulli" if args.L == 1 else "markov_burst")
    if model == "bernoulli":
        arr = ArrivalModel("bernoulli", p=args.p, batch=args.L)
    else:
        arr = ArrivalModel("markov_burst", batch=args.L, P=_matrix(args.P))
    ub = compute_upper_bound(BoundParams(arr, args.q, args.b, t_max=args.t_max))
    print(f"{ub.value:.6f}")
    if ub.L > 1:
        for k, val in ub.terms.items():
            print(f"# {k}: {val:.6f} {ub.argmin.get(k) or ''}", file=sys.stderr)
        print(f"# t_max={ub.t_max} tail_monotone={ub.tail_monotone}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)  # usage errors exit with status 2
    from . import harness
    try:
        if args.command == "bound":
            return _bound(args)
        cfg = _load(args)
        if args.command == "run":
            res = harness.run_experiment(cfg, threads=args.threads)
            for (lab, n), st in res.pooled().items():
                ps = " ".join(f"P(W>{b})={st.p_hat(b):.3e}" for b in cfg.thresholds)
                print(f"{lab} n={n} {ps}")
            print(f"outputs in {cfg.output_dir}")
        elif args.command == "sweep":
            paths = harness.figure_sweep(cfg, args.mode, b=args.b, n=args.n,
                                         threads=args.threads)
            print(paths["dat"].read_text(), end="")
            print(f"wrote {paths['csv']} and {paths['dat']}")
        elif args.command == "verify":
            rep = harness.verify(cfg, args.check, M=args.M)
            for line in rep.lines():
                print(line)
            return EXIT_OK if rep.total == 0 else EXIT_RUN
        elif args.command == "bench":
            res = harness.bench(cfg, reps=args.reps)
            for lab, r in res.items():
                cells = " ".join(f"n={n}:{s:.3e}s" for n, s in zip(r["n"], r["seconds"]))
                print(f"{lab} {cells} slope={r['slope']:.3f}")
            print(f"wrote {harness.write_bench(cfg, res)}")
    except FileNotFoundError as e:
        print(f"mcsched: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print("mcsched: invalid config:", file=sys.stderr)
        for p in e.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, ValueError, LookupError) as e:
        print(f"mcsched: error: {e}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
