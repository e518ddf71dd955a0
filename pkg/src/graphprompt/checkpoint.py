"""Versioned binary checkpoint container.

Layout: magic, uint32 version, uint32 config length, config JSON (UTF-8,
records array shapes), 32-byte SHA-256 of config+payload, then the arrays as
row-major little-endian float64 in order.  Arrays may be a list or a
name->array mapping; names round-trip through the config echo.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, UnsupportedVersionError

MAGIC = b"GPCK"
VERSION = 1


def write_checkpoint(path, config: dict, arrays) -> None:
    names = None
    if isinstance(arrays, dict):
        names = list(arrays)
        arrays = list(arrays.values())
    arrays = [np.ascontiguousarray(a, dtype="<f8") for a in arrays]
    config = dict(config)
    config["shapes"] = [list(a.shape) for a in arrays]
    if names is not None:
        config["array_names"] = names
    config_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
    payload = b"".join(a.tobytes() for a in arrays)
    digest = hashlib.sha256(config_bytes + payload).digest()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(config_bytes)))
        fh.write(config_bytes)
        fh.write(digest)
        fh.write(payload)


def read_checkpoint(path):
    """Return (config, arrays); raises CheckpointError on any corruption."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 + 4 + 32 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes / checksum header")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {version}")
    (config_len,) = struct.unpack("<I", raw[8:12])
    header_end = 12 + config_len
    config_bytes = raw[12:header_end]
    digest = raw[header_end:header_end + 32]
    payload = raw[header_end + 32:]
    if hashlib.sha256(config_bytes + payload).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    config = json.loads(config_bytes.decode("utf-8"))
    arrays = []
    offset = 0
    for shape in config.get("shapes", []):
        count = int(np.prod(shape)) if shape else 1
        try:
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        except ValueError as exc:
            raise CheckpointError(f"{path}: payload length disagrees with declared shapes") from exc
        arrays.append(arr.copy())
        offset += count * 8
    if offset != len(payload):
        raise CheckpointError(f"{path}: payload length disagrees with declared shapes")
    names = config.get("array_names")
    if names is not None:
        if len(names) != len(arrays):
            raise CheckpointError(f"{path}: array_names disagree with declared shapes")
        arrays = dict(zip(names, arrays))
    return config, arrays
