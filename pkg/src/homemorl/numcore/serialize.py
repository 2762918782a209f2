"""Checkpoint byte layout (all little-endian)::

    offset  size      field
    0       4         magic b"HMLP"
    4       4         uint32 format version (1)
    8       4         uint32 activation code (0 = relu/linear, 1 = sigmoid)
    12      4         uint32 number of layer sizes, n
    16      4*n       uint32 layer sizes
    16+4n   8*P       float64 theta, P = n_params
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"HMLP"
VERSION = 1
_ACT_CODES = {"relu": 0, "sigmoid": 1}


def to_bytes(params) -> bytes:
    sizes = params.shape.sizes
    header = MAGIC + struct.pack(
        f"<III{len(sizes)}I", VERSION, _ACT_CODES[params.shape.activation], len(sizes), *sizes
    )
    return header + params.theta.astype("<f8").tobytes()


def from_bytes(blob: bytes):
    from homemorl.numcore import LayerShape, MLPParams, ShapeError

    if blob[:4] != MAGIC:
        raise ShapeError("not a parameter checkpoint (bad magic)")
    version, act, n = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise ShapeError(f"unsupported checkpoint version {version}")
    sizes = struct.unpack_from(f"<{n}I", blob, 16)
    activation = {v: k for k, v in _ACT_CODES.items()}[act]
    shape = LayerShape(sizes, activation)
    theta = np.frombuffer(blob, dtype="<f8", offset=16 + 4 * n)
    return MLPParams(shape, theta.astype(np.float64))


def save_params(params, path) -> None:
    Path(path).write_bytes(to_bytes(params))


def load_params(path):
    return from_bytes(Path(path).read_bytes())
