"""
Experiment configuration files.

The format is line based ``key = value`` text.  ``#`` starts a comment,
blank lines are ignored and list values are comma separated.  Dotted keys
set model parameters::

    name        = fig2_iid
    policies    = DWM, DWM_N, HYBRID_DWMN_MWS, FBS(h=2, analysis), PERFECT_MATCHING(analysis)
    n_values    = 10, 20, 30
    arrival     = markov_burst          # bernoulli | markov_burst | counterexample
    arrival.batch = 5
    arrival.P   = 0.5 0.5; 0.1 0.9      # rows separated by ';'
    channel     = iid                   # iid | gilbert_elliott
    channel.q   = 0.75
    horizon     = 1000000
    warmup      = 10000
    thresholds  = 0, 1, 2
    seeds       = 1
    replications = 1
    coupled     = true
    output_dir  = out/fig2_iid

See README.md for the full key list and defaults.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .core import PreconditionError
from .policies import PolicyKind, PolicySpec
from .traffic import ArrivalModel, ChannelModel

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "parse_policy",
           "format_policy"]


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violated constraint."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_ALIASES = {
    "DWMN": "DWM_N", "DWM-N": "DWM_N", "DMWS": "D_MWS", "D-MWS": "D_MWS",
    "HYBRID": "HYBRID_DWMN_MWS", "DWM-N-MWS": "HYBRID_DWMN_MWS", "PM": "PERFECT_MATCHING",
    "Q-SSG": "Q_SSG", "QSSG": "Q_SSG", "Q-MWS": "Q_MWS", "QMWS": "Q_MWS",
}

_POLICY_RE = re.compile(r"^\s*([A-Za-z_\-]+)\s*(?:\((.*)\))?\s*$")


def parse_policy(text: str) -> PolicySpec:
    """``NAME`` or ``NAME(h=2, analysis)``."""
    m = _POLICY_RE.match(text)
    if not m:
        raise ConfigError([f"cannot parse policy {text!r}"])
    name = m.group(1).upper()
    name = _ALIASES.get(name, name)
    if name not in PolicyKind.__members__:
        raise ConfigError([f"unknown policy {m.group(1)!r}"])
    h = None
    analysis = False
    for arg in filter(None, (a.strip() for a in (m.group(2) or "").split(","))):
        if arg == "analysis":
            analysis = True
        elif arg.startswith("h="):
            try:
                h = int(arg[2:])
            except ValueError:
                raise ConfigError([f"bad FBS parameter in {text!r}"]) from None
        else:
            raise ConfigError([f"unknown policy option {arg!r} in {text!r}"])
    try:
        return PolicySpec(PolicyKind[name], fbs_h=h, analysis_variant=analysis)
    except PreconditionError as e:
        raise ConfigError([f"{text!r}: {e}"]) from None


def format_policy(spec: PolicySpec) -> str:
    opts = []
    if spec.fbs_h is not None:
        opts.append(f"h={spec.fbs_h}")
    if spec.analysis_variant:
        opts.append("analysis")
    return spec.kind.value + (f"({', '.join(opts)})" if opts else "")


def _split_list(v: str) -> list[str]:
    # commas inside parentheses belong to a policy's options
    out, depth, cur = [], 0, ""
    for ch in v:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def _matrix(v: str):
    rows = [r.split() for r in v.split(";")]
    return tuple(tuple(float(x) for x in r) for r in rows)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    policies: list = field(default_factory=list)
    n_values: list = field(default_factory=list)
    arrival: ArrivalModel = field(default_factory=lambda: ArrivalModel("bernoulli", p=0.3))
    channel: ChannelModel = field(default_factory=lambda: ChannelModel("iid", q=0.75))
    horizon: int = 1_000_000
    warmup: int = 10_000
    thresholds: list = field(default_factory=lambda: [0, 1, 2])
    seeds: list = field(default_factory=lambda: [1])
    replications: int = 1
    coupled: bool = True
    output_dir: str = "out"
    stride: int = 100
    engine: str = "auto"

    def problems(self) -> list[str]:
        errs = []
        if not self.policies:
            errs.append("policies must list at least one policy")
        if not self.n_values:
            errs.append("n_values must be nonempty")
        if any(n < 1 for n in self.n_values):
            errs.append("every n must be positive")
        if self.horizon < 0 or self.warmup < 0:
            errs.append("horizon and warmup must be nonnegative")
        elif self.horizon > 0 and self.horizon <= self.warmup:
            errs.append("horizon must exceed warmup")
        elif self.horizon == 0 and self.warmup:
            errs.append("an empty run (horizon = 0) cannot have a warmup")
        if not self.thresholds or any(b < 0 for b in self.thresholds):
            errs.append("thresholds must be nonnegative integers")
        if not self.seeds:
            errs.append("seeds must be nonempty")
        if self.replications < 1:
            errs.append("replications must be positive")
        if self.stride < 1:
            errs.append("stride must be positive")
        if self.engine not in ("auto", "reference"):
            errs.append("engine must be auto or reference")
        if self.arrival.kind == "counterexample" and list(self.n_values) != [2]:
            errs.append("the counterexample arrival pattern requires n_values = 2")
        L = self.arrival.L
        for sp in self.policies:
            for n in self.n_values:
                try:
                    sp.check(n, L)
                except PreconditionError as e:
                    errs.append(f"{format_policy(sp)}: {e}")
        return errs

    def validate(self) -> "ExperimentConfig":
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self

    def to_text(self) -> str:
        """Canonical config text; parsing it gives back an equal config."""
        a, c = self.arrival, self.channel
        lines = [
            f"name = {self.name}",
            f"policies = {', '.join(format_policy(p) for p in self.policies)}",
            f"n_values = {', '.join(map(str, self.n_values))}",
            f"arrival = {a.kind}",
            f"arrival.p = {a.p!r}",
            f"arrival.batch = {a.batch}",
            f"arrival.P = {'; '.join(' '.join(repr(x) for x in r) for r in a.P)}",
            f"arrival.K = {a.K}",
            f"channel = {c.kind}",
            f"channel.q = {c.q!r}",
            f"channel.P_near = {'; '.join(' '.join(repr(x) for x in r) for r in c.P_near)}",
            f"channel.P_far = {'; '.join(' '.join(repr(x) for x in r) for r in c.P_far)}",
            f"horizon = {self.horizon}",
            f"warmup = {self.warmup}",
            f"thresholds = {', '.join(map(str, self.thresholds))}",
            f"seeds = {', '.join(map(str, self.seeds))}",
            f"replications = {self.replications}",
            f"coupled = {'true' if self.coupled else 'false'}",
            f"output_dir = {self.output_dir}",
            f"stride = {self.stride}",
            f"engine = {self.engine}",
        ]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


_INT_LIST = {"n_values", "thresholds", "seeds"}
_INT = {"horizon", "warmup", "replications", "stride"}
_TOP = {"name", "policies", "arrival", "channel", "coupled", "output_dir", "engine"} | _INT | _INT_LIST
_ARR = {"p": float, "batch": int, "P": _matrix, "K": int}
_CH = {"q": float, "P_near": _matrix, "P_far": _matrix}


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; every problem found is reported at once."""
    errs: list[str] = []
    top: dict = {}
    arr_kw: dict = {}
    ch_kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key.startswith("arrival."):
                sub = key[len("arrival."):]
                if sub not in _ARR:
                    raise KeyError(key)
                arr_kw[sub] = _ARR[sub](value)
            elif key.startswith("channel."):
                sub = key[len("channel."):]
                if sub not in _CH:
                    raise KeyError(key)
                ch_kw[sub] = _CH[sub](value)
            elif key not in _TOP:
                raise KeyError(key)
            elif key in _INT:
                top[key] = int(value)
            elif key in _INT_LIST:
                top[key] = [int(v) for v in _split_list(value)]
            elif key == "policies":
                specs = []
                for item in _split_list(value):
                    try:
                        specs.append(parse_policy(item))
                    except ConfigError as e:
                        errs.extend(f"line {lineno}: {p}" for p in e.problems)
                top[key] = specs
            elif key == "coupled":
                if value.lower() not in ("true", "false", "yes", "no", "1", "0"):
                    raise ValueError(value)
                top[key] = value.lower() in ("true", "yes", "1")
            else:
                top[key] = value
        except KeyError:
            errs.append(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            errs.append(f"line {lineno}: bad value for {key!r}: {value!r}")
    arrival = channel = None
    try:
        arrival = ArrivalModel(top.pop("arrival", "bernoulli"), **arr_kw)
    except (PreconditionError, TypeError) as e:
        errs.append(f"arrival: {e}")
    try:
        channel = ChannelModel(top.pop("channel", "iid"), **ch_kw)
    except (PreconditionError, TypeError) as e:
        errs.append(f"channel: {e}")
    if arrival is not None and channel is not None:
        # semantic checks on whatever parsed, so one pass reports everything
        errs += ExperimentConfig(arrival=arrival, channel=channel, **top).problems()
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(arrival=arrival, channel=channel, **top)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
