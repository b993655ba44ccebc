"""Binary weight store.

Layout (little-endian, no padding)::

    b"EDAR"  u32 version=1  u32 tensor_count
    per tensor: u16 name_len, name (UTF-8), u8 ndim, u32 dims[ndim], float32 data

Besides parameters, a store carries metadata entries: ``__net__/<name>`` (a
scalar marking the network identity) and ``__cfg__/<key>`` scalars holding
builder hyperparameters.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EDAR"
VERSION = 1
NET_PREFIX = "__net__/"
CFG_PREFIX = "__cfg__/"


class WeightFormatError(ValueError):
    pass


def write_store(path, tensors: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            a = np.asarray(arr, dtype="<f4")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(np.ascontiguousarray(a).tobytes())


def read_store(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(dims)) if ndim else 1
            if pos + 4 * size > len(data):
                raise WeightFormatError(f"{path}: tensor {name!r} is truncated")
            out[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
            pos += 4 * size
    except struct.error as exc:
        raise WeightFormatError(f"{path}: truncated file") from exc
    if pos != len(data):
        raise WeightFormatError(f"{path}: {len(data) - pos} trailing bytes")
    return out


def save_weights(graph, path):
    tensors: dict[str, np.ndarray] = {NET_PREFIX + graph.name: np.array(1.0)}
    for k, v in sorted(graph.meta.items()):
        tensors[CFG_PREFIX + k] = np.array(float(v))
    tensors.update(graph.params)
    write_store(path, tensors)


def read_metadata(path) -> tuple[str, dict[str, float]]:
    store = read_store(path)
    names = [k[len(NET_PREFIX):] for k in store if k.startswith(NET_PREFIX)]
    if len(names) != 1:
        raise WeightFormatError(f"{path}: expected one network name entry, found {names}")
    cfg = {k[len(CFG_PREFIX):]: float(v) for k, v in store.items() if k.startswith(CFG_PREFIX)}
    return names[0], cfg


def load_weights(graph, path):
    store = read_store(path)
    name = NET_PREFIX + graph.name
    if name not in store:
        found = [k for k in store if k.startswith(NET_PREFIX)]
        raise WeightFormatError(f"{path}: weights are for {found}, not {graph.name!r}")
    params = {k: v.astype(np.float64) for k, v in store.items()
              if not k.startswith((NET_PREFIX, CFG_PREFIX))}
    graph.load_state(params)
    return graph


def quantize_params(graph):
    """Round parameters to float32 in place, matching what a save/load round trip yields."""
    for p in graph.params.values():
        p[...] = p.astype(np.float32).astype(np.float64)
    return graph
