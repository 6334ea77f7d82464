"""Coupled runs: every oldest-first policy serves a superset of what FBS and
the perfect-matching policy serve, slot after slot.  Also runs the per-slot
OPF and MWF checks.

Run: python3 demos/05_dominance.py   (a couple of minutes)
"""
from pathlib import Path

from mcsched.config import load_config
from mcsched.harness import verify

cfg = load_config(Path(__file__).parent / "configs" / "dominance.cfg")
for check in ("dominance", "opf", "mwf"):
    rep = verify(cfg, check)
    print(f"-- {check}")
    for line in rep.lines():
        print("  " + line)
