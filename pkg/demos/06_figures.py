"""Plot data for P(W > b) against n, bursty traffic.  Writes CSV and gnuplot .dat.

The full config runs 10^6 slots per cell; pass a horizon to shorten it:
    python3 demos/06_figures.py 100000
"""
import sys
from dataclasses import replace
from pathlib import Path

from mcsched.config import load_config
from mcsched.harness import figure_sweep, run_experiment

HERE = Path(__file__).parent
cfg = load_config(HERE / "configs" / "fig2_bursty.cfg")
cfg = replace(cfg, output_dir=str(HERE / cfg.output_dir))
if len(sys.argv) > 1:
    cfg = replace(cfg, horizon=int(sys.argv[1])).validate()
res = run_experiment(cfg)
for b in (1, 2):
    paths = figure_sweep(cfg, "vs_n", res, b=b)
    print(paths["dat"].read_text())
paths = figure_sweep(cfg, "vs_b", res, n=cfg.n_values[0])
print(f"wrote {paths['csv']}")
# gnuplot> set logscale y; plot for [i=0:5] 'fig2_bursty_vs_n_b2.dat' index i u 1:2 w lp
