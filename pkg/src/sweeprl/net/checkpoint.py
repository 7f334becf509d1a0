"""Versioned binary checkpoint format for networks.

Layout:
    4 bytes   magic b"SWQN"
    4 bytes   format version, little-endian uint32
    4 bytes   header length, little-endian uint32
    N bytes   UTF-8 JSON header: {"layers": [...], "dtype": ..., "extra": {...}}
    payload   every parameter tensor in layer order, little-endian float32

Parameters are always stored as float32 regardless of the in-memory dtype,
so checkpoints written by float32 training networks round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .layers import Network, layer_from_spec

MAGIC = b"SWQN"
VERSION = 1


def save_network(network: Network, path: str, extra: dict | None = None) -> None:
    header = {
        "layers": network.layer_specs(),
        "dtype": network.dtype.name,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        handle.write(struct.pack("<I", len(header_bytes)))
        handle.write(header_bytes)
        for param in network.parameters():
            handle.write(np.ascontiguousarray(param, dtype="<f4").tobytes())


def load_network(path: str, dtype=None) -> tuple[Network, dict]:
    """Rebuild a network and return (network, extra header dict)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a network checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<I", blob, 8)
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    use_dtype = np.dtype(dtype) if dtype is not None else np.dtype(header["dtype"])
    network = Network(
        [layer_from_spec(spec, dtype=use_dtype) for spec in header["layers"]],
        dtype=use_dtype,
    )
    offset = 12 + header_len
    for param in network.parameters():
        raw = np.frombuffer(blob, dtype="<f4", count=param.size, offset=offset)
        offset += param.size * 4
        param[...] = raw.reshape(param.shape).astype(use_dtype)
    if offset != len(blob):
        raise ValueError("checkpoint payload length mismatch")
    return network, header.get("extra", {})
