"""Versioned binary blob for fitted estimators.

Layout, all integers little-endian::

    8 bytes   magic b"GMMBEST\\0"
    u16       format version (1)
    u16 + n   kind tag, UTF-8
    u32 u32   input dimension P, output dimension Q
    u32 + n   JSON header: config, metadata, and [name, shape] for each array
    ...       each array in header order, row-major float64 little-endian
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .base import KINDS, FittedEstimator

MAGIC = b"GMMBEST\x00"
VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def dumps(est: FittedEstimator) -> bytes:
    names = list(est.arrays)
    header = {
        "config": _jsonable(est.config),
        "metadata": _jsonable(est.metadata),
        "arrays": [[k, list(est.arrays[k].shape)] for k in names],
    }
    kind = est.kind.encode()
    head = json.dumps(header, sort_keys=True).encode()
    parts = [
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack("<H", len(kind)), kind,
        struct.pack("<II", est.P, est.Q),
        struct.pack("<I", len(head)), head,
    ]
    parts += [np.ascontiguousarray(est.arrays[k], dtype="<f8").tobytes() for k in names]
    return b"".join(parts)


def loads(blob: bytes) -> FittedEstimator:
    view = memoryview(blob)
    if bytes(view[:8]) != MAGIC:
        raise ValueError("not a fitted-estimator blob (bad magic)")
    pos = 8
    (version,) = struct.unpack_from("<H", view, pos)
    pos += 2
    if version != VERSION:
        raise ValueError(f"unsupported blob version {version}")
    (klen,) = struct.unpack_from("<H", view, pos)
    pos += 2
    kind = bytes(view[pos:pos + klen]).decode()
    pos += klen
    if kind not in KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    P, Q = struct.unpack_from("<II", view, pos)
    pos += 8
    (hlen,) = struct.unpack_from("<I", view, pos)
    pos += 4
    header = json.loads(bytes(view[pos:pos + hlen]).decode())
    pos += hlen
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(view, dtype="<f8", count=count, offset=pos).reshape(shape)
        arrays[name] = arr.astype(np.float64)
        pos += 8 * count
    if pos != len(blob):
        raise ValueError(f"blob has {len(blob) - pos} trailing bytes")
    return FittedEstimator(kind, P, Q, arrays, header["config"], header["metadata"])


def save(est: FittedEstimator, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(est))


def load(path) -> FittedEstimator:
    with open(path, "rb") as fh:
        return loads(fh.read())
