"""Binary checkpoints for trained discriminator/generator pairs.

Layout (all integers little-endian)::

    b"CATGAN01"            magic
    u32 version
    u32 header_length
    header                 UTF-8 JSON: network specs, input standardizer, metadata
    payload                float32 little-endian arrays

The payload holds, for the discriminator and then the generator (if any),
each layer's W, b and, for batch-normalized layers, gamma, beta, running
mean and running variance, in that order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Standardizer
from .errors import FormatError
from .nn import Network, NetworkSpec, init_network

MAGIC = b"CATGAN01"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    disc: Network
    gen: Optional[Network] = None
    scaler: Optional[Standardizer] = None
    meta: dict = field(default_factory=dict)


def _arrays(net: Network) -> list[np.ndarray]:
    out = []
    for layer in net.layers:
        out += [layer.weight.data, layer.bias.data]
        if layer.gamma is not None:
            out += [layer.gamma.data, layer.beta.data, layer.running_mean, layer.running_var]
    return out


def save_checkpoint(path, disc: Network, gen: Optional[Network] = None,
                    scaler: Optional[Standardizer] = None, meta: Optional[dict] = None) -> None:
    header = {
        "disc": disc.spec.to_dict(),
        "gen": gen.spec.to_dict() if gen is not None else None,
        "scaler": None if scaler is None else {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()},
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    for net in (disc, gen):
        if net is not None:
            parts += [np.ascontiguousarray(a, dtype=_F32).tobytes() for a in _arrays(net)]
    Path(path).write_bytes(b"".join(parts))


def _fill(net: Network, payload: memoryview, offset: int) -> int:
    for layer in net.layers:
        slots = [layer.weight.data, layer.bias.data]
        if layer.gamma is not None:
            slots += [layer.gamma.data, layer.beta.data, layer.running_mean, layer.running_var]
        for target in slots:
            n = target.size * _F32.itemsize
            if offset + n > len(payload):
                raise FormatError("checkpoint payload is truncated")
            target[...] = np.frombuffer(payload[offset:offset + n], dtype=_F32).reshape(target.shape)
            offset += n
    return offset


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint; networks come back in eval mode."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic {raw[:8]!r})")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise FormatError(f"{path}: checkpoint version {version} is not supported (expected {VERSION})")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from None
    payload = memoryview(raw)[16 + hlen:]
    disc = init_network(NetworkSpec.from_dict(header["disc"]), 0)
    offset = _fill(disc, payload, 0)
    gen = None
    if header.get("gen") is not None:
        gen = init_network(NetworkSpec.from_dict(header["gen"]), 0)
        offset = _fill(gen, payload, offset)
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} unexpected trailing bytes")
    scaler = None
    if header.get("scaler") is not None:
        scaler = Standardizer(np.array(header["scaler"]["mean"]), np.array(header["scaler"]["std"]))
    disc.eval()
    if gen is not None:
        gen.eval()
    return Checkpoint(disc, gen, scaler, header.get("meta", {}))
