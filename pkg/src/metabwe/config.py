"""Run configuration: a line-oriented ``key = value`` file with ``[section]`` headers.

Every key has a typed default; command-line flags of the form
``--section-key value`` override the file. Unknown sections or keys are
errors, so typos do not silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from . import bwe
from .qoe import QoeParams
from .rl.iql import TrainConfig
from .sim import SimConfig, windows_per_interval
from .trace import EVAL_REGIMES, REGIMES


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    default: object
    help: str = ""

    @property
    def dotted(self) -> str:
        return f"{self.section}.{self.name}"

    @property
    def flag(self) -> str:
        return f"--{self.section}-{self.name}".replace("_", "-")


def _keys() -> list[Key]:
    keys = [
        Key("paths", "traces_dir", "traces", "directory for generated trace files"),
        Key("paths", "dataset", "data/dataset.ivd", "offline dataset file"),
        Key("paths", "checkpoint", "data/ivy.ckpt", "trained metapolicy checkpoint"),
        Key("paths", "reports_dir", "reports", "directory for report files"),
        Key("run", "seed", 0, "master seed for traces, simulation and training"),
        Key("run", "workers", 1, "worker processes for collection and evaluation"),
        Key("sim", "call_duration", 120.0, "call length in seconds"),
        Key("sim", "decision_interval", 6.0, "metapolicy period in seconds (multiple of 0.6)"),
        Key("sim", "video_delay", False, "hold video until 12 s into the call"),
        Key("pool", "names", bwe.DEFAULT_POOL, "estimators in the pool, in action order"),
        Key("traces", "per_regime", 50, "traces written per regime by gen-traces"),
        Key("traces", "regimes", REGIMES, "regimes written by gen-traces"),
        Key("collect", "calls", 2000, "random-policy calls in the offline dataset"),
        Key("collect", "regimes", EVAL_REGIMES + ("lte",), "regimes sampled during collection"),
        Key("eval", "calls", 50, "paired calls per policy per regime"),
        Key("eval", "regimes", EVAL_REGIMES, "regimes in the A/B report"),
        Key("eval", "nonstationary_calls", 30, "calls per policy in the nonstationary scenario"),
        Key("eval", "trace_source", "generate",
            "'generate' from seeds, or 'files' to read traces_dir/<regime>/*.trace"),
        Key("eval", "paired", True, "every policy sees the same traces and seeds"),
        Key("ablate", "intervals", (1.2, 3.0, 4.8, 6.0), "decision intervals to compare"),
        Key("ablate", "collect_calls", 2000, "offline calls collected per interval"),
        Key("ablate", "eval_calls", 50, "paired calls per policy per regime per interval"),
        Key("ablate", "regimes", EVAL_REGIMES, "regimes in the ablation report"),
    ]
    for f in fields(TrainConfig):
        if f.name != "seed":
            keys.append(Key("train", f.name, f.default))
    for f in fields(QoeParams):
        keys.append(Key("qoe", f.name, f.default))
    for est, params in bwe.DEFAULT_PARAMS.items():
        for name, value in params.items():
            keys.append(Key(est, name, value))
    return keys


KEYS = _keys()
_BY_NAME = {k.dotted: k for k in KEYS}
SECTIONS = tuple(dict.fromkeys(k.section for k in KEYS))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def _coerce(key: Key, raw: str):
    raw = raw.strip()
    d = key.default
    try:
        if isinstance(d, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError("expected true or false")
        if isinstance(d, int):
            return int(raw)
        if isinstance(d, float):
            return float(raw)
        if isinstance(d, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if d and isinstance(d[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        return raw
    except ValueError as e:
        raise ConfigError(f"{key.dotted}: cannot parse {raw!r} ({e})") from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k.dotted: k.default for k in KEYS})

    def __getitem__(self, dotted: str):
        return self.values[dotted]

    def set(self, dotted: str, raw) -> None:
        if dotted not in _BY_NAME:
            raise ConfigError(f"unknown config key {dotted!r}")
        key = _BY_NAME[dotted]
        self.values[dotted] = _coerce(key, raw) if isinstance(raw, str) else raw

    def section(self, name: str) -> dict:
        return {k.name: self.values[k.dotted] for k in KEYS if k.section == name}

    # -- derived objects ----------------------------------------------------

    def sim_config(self, interval: float | None = None) -> SimConfig:
        return SimConfig(call_duration=self["sim.call_duration"],
                         decision_interval=interval or self["sim.decision_interval"],
                         video_delay=self["sim.video_delay"],
                         qoe=QoeParams(**self.section("qoe")))

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self["run.seed"], **self.section("train"))

    def pool(self):
        names = self["pool.names"]
        overrides = {n: self.section(n) for n in names if n in bwe.DEFAULT_PARAMS}
        return bwe.make_pool(names, overrides)

    def validate(self) -> None:
        """Raise ConfigError naming the first invalid key."""
        def need(ok, dotted, msg):
            if not ok:
                raise ConfigError(f"{dotted}: {msg} (got {self.values[dotted]!r})")

        need(self["sim.call_duration"] > 0, "sim.call_duration", "must be positive")
        for dotted in ("sim.decision_interval",):
            try:
                windows_per_interval(self[dotted])
            except ValueError as e:
                raise ConfigError(f"{dotted}: {e}") from None
        for v in self["ablate.intervals"]:
            try:
                windows_per_interval(v)
            except ValueError as e:
                raise ConfigError(f"ablate.intervals: {e}") from None
        need(self["sim.call_duration"] >= self["sim.decision_interval"], "sim.call_duration",
             "must be at least one decision interval")
        for dotted in ("run.workers", "traces.per_regime", "collect.calls",
                       "ablate.collect_calls"):
            need(self[dotted] >= 1, dotted, "must be >= 1")
        for dotted in ("eval.calls", "eval.nonstationary_calls", "ablate.eval_calls"):
            need(self[dotted] >= 2, dotted, "must be >= 2")
        need(self["run.seed"] >= 0, "run.seed", "must be >= 0")
        names = self["pool.names"]
        need(len(names) >= 2, "pool.names", "needs at least two estimators")
        need(len(set(names)) == len(names), "pool.names", "names must be unique")
        for n in names:
            need(n in bwe.KINDS, "pool.names", f"unknown estimator {n!r}")
        for dotted in ("traces.regimes", "collect.regimes", "eval.regimes", "ablate.regimes"):
            need(len(self[dotted]) > 0, dotted, "must not be empty")
            for g in self[dotted]:
                need(g in REGIMES, dotted, f"unknown regime {g!r}")
        need(self["eval.trace_source"] in ("generate", "files"), "eval.trace_source",
             "must be 'generate' or 'files'")
        try:
            self.train_config()
        except ValueError as e:
            raise ConfigError(f"train: {e}") from None
        for est in bwe.DEFAULT_PARAMS:
            for name, v in self.section(est).items():
                need(v >= 0, f"{est}.{name}", "must be >= 0")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside of a [section]")
        name, raw = (s.strip() for s in line.split("=", 1))
        dotted = f"{section}.{name}"
        if dotted not in _BY_NAME:
            raise ConfigError(f"{source}:{lineno}: unknown config key {dotted!r}")
        cfg.set(dotted, raw)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def format_config(cfg: RunConfig) -> str:
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        out += [f"{k.name} = {_format(cfg[k.dotted])}" for k in KEYS if k.section == sec]
        out.append("")
    return "\n".join(out)


def describe_keys() -> str:
    """One line per key with its default, for ``--help``."""
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for k in KEYS:
            if k.section == sec:
                tail = f"  {k.help}" if k.help else ""
                lines.append(f"  {k.name} = {_format(k.default)}{tail}")
    return "\n".join(lines)
