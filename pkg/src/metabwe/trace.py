"""Network traces: piecewise link capacity, base delay and random loss."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

REGIMES = (
    "stable_lbw",
    "fluct_lbw",
    "burst_lbw",
    "stable_hbw",
    "fluct_hbw",
    "burst_hbw",
    "lte",
    "nonstationary",
)
#: the six holdout regimes used by the A/B harness
EVAL_REGIMES = REGIMES[:6]

LBW_BAND = (150.0, 800.0)
HBW_BAND = (2000.0, 8000.0)
LTE_BAND = (600.0, 3000.0)
# nonstationary middle phase; kept above LBW_BAND so phases are strictly ordered
LTE_PHASE_BAND = (800.0, 2000.0)
OWD_BAND = (20.0, 80.0)
FLUCT_SEGMENT_S = (5.0, 15.0)
LTE_SEGMENT_S = (2.0, 8.0)
BURST_S = (2.0, 6.0)
QUIET_S = (4.0, 12.0)
BURST_LOSS = (0.05, 0.15)
QUIET_LOSS = (0.0, 0.01)
STABLE_LOSS = (0.0, 0.005)
LTE_LOSS = (0.0, 0.03)

MAGIC = "IVYTRACE v1"


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed."""


@dataclass(frozen=True)
class TraceSegment:
    duration: float  # s
    capacity: float  # kbps
    base_owd: float  # ms
    random_loss: float  # fraction

    def __post_init__(self):
        for name in ("duration", "capacity", "base_owd", "random_loss"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if self.capacity <= 0:
            raise ValueError(f"capacity must be > 0, got {self.capacity}")
        if self.base_owd < 0:
            raise ValueError(f"base_owd must be >= 0, got {self.base_owd}")
        if not 0.0 <= self.random_loss < 1.0:
            raise ValueError(f"random_loss must be in [0, 1), got {self.random_loss}")


@dataclass(frozen=True)
class Trace:
    id: str
    regime: str
    segments: tuple[TraceSegment, ...]
    seed: int

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.segments:
            raise ValueError("trace needs at least one segment")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def per_tick(self, n_ticks: int, tick_s: float = 0.06):
        """Capacity, base owd and loss arrays for ticks starting at ``i * tick_s``."""
        ends = np.cumsum([s.duration for s in self.segments])
        t = np.arange(n_ticks) * tick_s
        idx = np.minimum(np.searchsorted(ends, t, side="right"), len(self.segments) - 1)
        cap = np.array([s.capacity for s in self.segments], dtype=float)[idx]
        owd = np.array([s.base_owd for s in self.segments], dtype=float)[idx]
        loss = np.array([s.random_loss for s in self.segments], dtype=float)[idx]
        return cap, owd, loss


def _rng(regime: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, REGIMES.index(regime)]))


def _chop(rng, duration, seg_range):
    """Split ``duration`` into pieces drawn from ``seg_range``; last piece truncated."""
    out = []
    left = duration
    while left > 1e-9:
        d = min(float(rng.uniform(*seg_range)), left)
        out.append(d)
        left -= d
    return out


def _band(regime: str):
    if regime.endswith("lbw"):
        return LBW_BAND
    if regime.endswith("hbw"):
        return HBW_BAND
    return LTE_BAND


def _stable(rng, duration, band):
    return [TraceSegment(duration, float(rng.uniform(*band)), float(rng.uniform(*OWD_BAND)),
                         float(rng.uniform(*STABLE_LOSS)))]


def _fluct(rng, duration, band, seg_range, loss_range):
    owd = float(rng.uniform(*OWD_BAND))
    return [TraceSegment(d, float(rng.uniform(*band)), owd, float(rng.uniform(*loss_range)))
            for d in _chop(rng, duration, seg_range)]


def _burst(rng, duration, band):
    cap = float(rng.uniform(*band))
    owd = float(rng.uniform(*OWD_BAND))
    segs = []
    left = duration
    quiet = True
    while left > 1e-9:
        rng_s, rng_l = (QUIET_S, QUIET_LOSS) if quiet else (BURST_S, BURST_LOSS)
        d = float(rng.uniform(*rng_s))
        if len(segs) == 0:
            # a short call still gets one quiet and one burst period
            d = min(d, left / 2.0)
        d = min(d, left)
        segs.append(TraceSegment(d, cap, owd, float(rng.uniform(*rng_l))))
        left -= d
        quiet = not quiet
    return segs


def generate_trace(regime: str, seed: int, duration: float) -> Trace:
    """Deterministically generate a trace for ``(regime, seed, duration)``."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {', '.join(REGIMES)}")
    if not duration > 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    rng = _rng(regime, seed)
    kind = regime.split("_")[0]
    if kind == "stable":
        segs = _stable(rng, duration, _band(regime))
    elif kind == "fluct":
        segs = _fluct(rng, duration, _band(regime), FLUCT_SEGMENT_S, STABLE_LOSS)
    elif kind == "burst":
        segs = _burst(rng, duration, _band(regime))
    elif regime == "lte":
        segs = _fluct(rng, duration, LTE_BAND, LTE_SEGMENT_S, LTE_LOSS)
    else:
        third = duration / 3.0
        segs = (_stable(rng, third, LBW_BAND)
                + _fluct(rng, third, LTE_PHASE_BAND, LTE_SEGMENT_S, LTE_LOSS)
                + _stable(rng, duration - 2 * third, HBW_BAND))
    return Trace(id=f"{regime}-{seed}", regime=regime, segments=tuple(segs), seed=seed)


def format_trace(trace: Trace) -> str:
    lines = [MAGIC, f"id={trace.id} regime={trace.regime} seed={trace.seed}"]
    for s in trace.segments:
        lines.append(f"seg dur={s.duration!r} cap={s.capacity!r} owd={s.base_owd!r} "
                     f"loss={s.random_loss!r}")
    return "\n".join(lines) + "\n"


def _fields(line: str, lineno: int, expected: tuple[str, ...]) -> dict[str, str]:
    out = {}
    for tok in line.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise TraceFormatError(f"line {lineno}: expected key=value, got {tok!r}")
        out[key] = val
    missing = [k for k in expected if k not in out]
    if missing:
        raise TraceFormatError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    return out


def parse_trace(text: str) -> Trace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise TraceFormatError(f"line 1: expected header {MAGIC!r}")
    if len(lines) < 2:
        raise TraceFormatError("line 2: missing trace metadata")
    meta = _fields(lines[1], 2, ("id", "regime", "seed"))
    if meta["regime"] not in REGIMES:
        raise TraceFormatError(f"line 2: field regime: unknown regime {meta['regime']!r}")
    try:
        seed = int(meta["seed"])
    except ValueError:
        raise TraceFormatError(f"line 2: field seed: not an integer: {meta['seed']!r}") from None
    segs = []
    keys = {"dur": "duration", "cap": "capacity", "owd": "base_owd", "loss": "random_loss"}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head != "seg":
            raise TraceFormatError(f"line {lineno}: expected 'seg', got {head!r}")
        raw = _fields(rest, lineno, tuple(keys))
        vals = {}
        for short, name in keys.items():
            try:
                vals[name] = float(raw[short])
            except ValueError:
                raise TraceFormatError(
                    f"line {lineno}: field {short}: not a number: {raw[short]!r}") from None
        try:
            segs.append(TraceSegment(**vals))
        except ValueError as e:
            short = next(k for k, v in keys.items() if str(e).startswith(v))
            raise TraceFormatError(f"line {lineno}: field {short}: {e}") from None
    try:
        return Trace(id=meta["id"], regime=meta["regime"], segments=tuple(segs), seed=seed)
    except ValueError as e:
        raise TraceFormatError(f"trace: {e}") from None


def save_trace(trace: Trace, path) -> None:
    Path(path).write_text(format_trace(trace))


def load_trace(path) -> Trace:
    return parse_trace(Path(path).read_text())
