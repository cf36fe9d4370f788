"""Offline transition dataset and its line-oriented file format.

::

    IVYDATA v1 pool=<n> interval=<f> [names=<a,b,c>]
    s=<65 csv floats> a=<u> r=<f> s2=<65 csv floats> done=<0|1> call=<id> [est=<n csv floats>]

``names`` and ``est`` are optional extensions: the pool's estimator names and
each estimator's output at the decision point (used for the delta rule's
threshold).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .meta import STATE_DIM

MAGIC = "IVYDATA v1"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    state: tuple
    action: int
    reward: float
    next_state: tuple
    done: bool
    call_id: str = ""
    estimates: tuple | None = None


@dataclass
class Dataset:
    pool_size: int
    interval: float
    transitions: list = field(default_factory=list)
    pool_names: tuple = ()

    def __len__(self):
        return len(self.transitions)

    def arrays(self):
        """``(s, a, r, s2, done, call_ids)`` as numpy arrays (float32 states)."""
        ts = self.transitions
        s = np.array([t.state for t in ts], dtype=np.float32).reshape(len(ts), -1)
        a = np.array([t.action for t in ts], dtype=np.int64)
        r = np.array([t.reward for t in ts], dtype=np.float32)
        s2 = np.array([t.next_state for t in ts], dtype=np.float32).reshape(len(ts), -1)
        d = np.array([t.done for t in ts], dtype=np.float32)
        calls = [t.call_id for t in ts]
        return s, a, r, s2, d, calls


def _csv(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def format_record(t: Transition) -> str:
    line = (f"s={_csv(t.state)} a={t.action} r={float(t.reward)!r} s2={_csv(t.next_state)} "
            f"done={int(bool(t.done))} call={t.call_id}")
    if t.estimates is not None:
        line += f" est={_csv(t.estimates)}"
    return line


def format_header(ds: Dataset) -> str:
    head = f"{MAGIC} pool={ds.pool_size} interval={float(ds.interval)!r}"
    if ds.pool_names:
        head += " names=" + ",".join(ds.pool_names)
    return head


def write_dataset(ds: Dataset, path) -> None:
    lines = [format_header(ds)] + [format_record(t) for t in ds.transitions]
    Path(path).write_text("\n".join(lines) + "\n")


def _floats(raw: str, lineno: int, key: str, n: int | None = None) -> tuple:
    try:
        vals = tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: field {key}: bad float list") from None
    if n is not None and len(vals) != n:
        raise DatasetFormatError(f"line {lineno}: field {key}: expected {n} values, got {len(vals)}")
    return vals


def parse_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise DatasetFormatError(f"line 1: expected header starting with {MAGIC!r}")
    head = dict(tok.partition("=")[::2] for tok in lines[0][len(MAGIC):].split())
    try:
        pool = int(head["pool"])
        interval = float(head["interval"])
    except (KeyError, ValueError):
        raise DatasetFormatError("line 1: header needs pool=<n> interval=<f>") from None
    names = tuple(head["names"].split(",")) if head.get("names") else ()
    if names and len(names) != pool:
        raise DatasetFormatError("line 1: names does not match pool size")
    ds = Dataset(pool_size=pool, interval=interval, pool_names=names)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = {}
        for tok in line.split():
            k, sep, v = tok.partition("=")
            if not sep:
                raise DatasetFormatError(f"line {lineno}: expected key=value, got {tok!r}")
            f[k] = v
        for k in ("s", "a", "r", "s2", "done", "call"):
            if k not in f:
                raise DatasetFormatError(f"line {lineno}: missing field {k}")
        try:
            a = int(f["a"])
            r = float(f["r"])
            done = {"0": False, "1": True}[f["done"]]
        except (ValueError, KeyError):
            raise DatasetFormatError(f"line {lineno}: bad a/r/done value") from None
        if not 0 <= a < pool:
            raise DatasetFormatError(f"line {lineno}: field a: action {a} outside pool of {pool}")
        est = _floats(f["est"], lineno, "est", pool) if "est" in f else None
        ds.transitions.append(Transition(
            state=_floats(f["s"], lineno, "s", STATE_DIM),
            action=a,
            reward=r,
            next_state=_floats(f["s2"], lineno, "s2", STATE_DIM),
            done=done,
            call_id=f["call"],
            estimates=est,
        ))
    return ds


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text())
