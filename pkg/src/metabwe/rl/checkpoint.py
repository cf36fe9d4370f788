"""Checkpoint file format.

::

    IVYCKPT v1\\n
    <one-line JSON header: layer sizes per net, pool names, train config, epochs>\\n
    <float32 little-endian blocks: actor, q, v, q_target; each W1 b1 W2 b2 W3 b3,
     weights row-major with shape (fan_in, fan_out)>
    <for adam only: first then second moments of actor, q, v in the same layout>

Optimizer moments and step counts are stored so a resumed run continues exactly.

The loss trace is not part of the checkpoint; the CLI writes it separately.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .iql import TRAINED, Checkpoint, Nets, TrainConfig, config_dict
from .mlp import AdamState, MlpParams

MAGIC = b"IVYCKPT v1\n"
VERSION = 1
NET_ORDER = ("actor", "q", "v", "q_target")


class CheckpointError(ValueError):
    pass


def _shapes(sizes):
    out = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        out += [(fan_in, fan_out), (fan_out,)]
    return out


def checkpoint_bytes(ck: Checkpoint) -> bytes:
    header = {
        "version": VERSION,
        "sizes": {name: list(getattr(ck.nets, name).sizes) for name in NET_ORDER},
        "pool_names": list(ck.pool_names),
        "config": config_dict(ck.config),
        "epochs_done": ck.epochs_done,
        "opt_steps": {name: ck.nets.opt[name].t for name in TRAINED if name in ck.nets.opt},
    }
    parts = [MAGIC, json.dumps(header, sort_keys=True).encode() + b"\n"]
    for name in NET_ORDER:
        for t in getattr(ck.nets, name).tensors():
            parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    for name in TRAINED:
        if name in ck.nets.opt:
            st = ck.nets.opt[name]
            for t in st.m.tensors() + st.v.tensors():
                parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(ck: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ck))


def parse_checkpoint(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        if data.startswith(b"IVYCKPT "):
            raise CheckpointError("unsupported checkpoint version: "
                                  + data.split(b"\n", 1)[0].decode(errors="replace"))
        raise CheckpointError("not a checkpoint file (bad magic)")
    rest = data[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError("truncated checkpoint: missing header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    blob = rest[nl + 1:]
    offset = 0

    def block(sizes, what):
        nonlocal offset
        tensors = []
        for shape in _shapes(sizes):
            count = int(np.prod(shape))
            nbytes = 4 * count
            if offset + nbytes > len(blob):
                raise CheckpointError(f"truncated checkpoint: {what} incomplete")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            tensors.append(arr.astype(np.float32).reshape(shape))
            offset += nbytes
        return MlpParams(sizes, tensors[0::2], tensors[1::2])

    try:
        nets = {name: block(tuple(header["sizes"][name]), f"{name} weights") for name in NET_ORDER}
        opt = {}
        steps_by_net = header.get("opt_steps", {})
        for name in TRAINED:
            if name not in steps_by_net:
                continue
            steps = steps_by_net[name]
            sizes = tuple(header["sizes"][name])
            m = block(sizes, f"{name} optimizer state")
            v = block(sizes, f"{name} optimizer state")
            opt[name] = AdamState(m, v, int(steps))
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: missing {e}") from None
    if offset != len(blob):
        raise CheckpointError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return Checkpoint(
        nets=Nets(**nets, opt=opt),
        config=TrainConfig(**header["config"]),
        pool_names=tuple(header["pool_names"]),
        epochs_done=int(header["epochs_done"]),
        version=VERSION,
    )


def load_checkpoint(path) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes())
