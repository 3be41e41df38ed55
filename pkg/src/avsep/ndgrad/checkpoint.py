"""Flat binary checkpoint container for named parameter tensors.

Layout, repeated once per tensor until end of file (all integers are
unsigned 64-bit little-endian, all floats are IEEE-754 float64
little-endian):

    name_len : u64          length of the UTF-8 encoded name in bytes
    name     : name_len B   UTF-8 parameter name
    rank     : u64          number of dimensions
    extents  : rank x u64   dimension sizes
    values   : prod(extents) x f64   row-major values

Tensors are written in sorted-name order so files are byte-reproducible.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict

import numpy as np

from avsep.errors import InputError
from avsep.ndgrad.tensor import Tensor


def save_checkpoint(path, params: Dict[str, Tensor]):
    path = Path(path)
    with open(path, "wb") as fh:
        for name in sorted(params):
            # note: ascontiguousarray would promote rank-0 to rank-1
            data = np.asarray(params[name].data, dtype="<f8", order="C")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path) -> Dict[str, Tensor]:
    path = Path(path)
    blob = path.read_bytes()
    pos = 0
    out: Dict[str, Tensor] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise InputError(f"truncated checkpoint: {path}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (name_len,) = struct.unpack("<Q", take(8))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        extents = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        count = int(np.prod(extents)) if extents else 1
        values = np.frombuffer(take(8 * count), dtype="<f8").reshape(extents)
        out[name] = Tensor(values.astype(np.float64), requires_grad=True, name=name)
    return out
