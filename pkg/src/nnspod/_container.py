"""Deterministic binary container: magic, version, JSON metadata, raw f64 arrays.

Layout::

    magic[4] | u32 version | u32 meta_len | meta (UTF-8 JSON, sorted keys)
    | arrays as little-endian float64, in the order of meta["_arrays"]

No timestamps or platform-dependent fields are written, so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

VERSION = 1


class ModelFormatError(ValueError):
    """Corrupt or incompatible model file."""


def pack(magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    names = list(arrays)
    meta = dict(meta)
    meta["_arrays"] = [[k, list(np.shape(arrays[k]))] for k in names]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [magic, struct.pack("<II", VERSION, len(blob)), blob]
    for k in names:
        parts.append(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())
    return b"".join(parts)


def unpack(raw: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(raw) < 12 or raw[:4] != magic:
        raise ModelFormatError(f"bad magic; expected {magic!r}")
    version, meta_len = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    try:
        meta = json.loads(raw[12:12 + meta_len].decode())
        layout = meta.pop("_arrays")
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise ModelFormatError(f"corrupt metadata block ({exc})") from None
    off = 12 + meta_len
    arrays = {}
    for name, shape in layout:
        count = int(np.prod(shape)) if shape else 1
        if off + 8 * count > len(raw):
            raise ModelFormatError(f"truncated payload at array {name!r}")
        arrays[name] = np.frombuffer(raw, "<f8", count, off).astype(float).reshape(shape)
        off += 8 * count
    if off != len(raw):
        raise ModelFormatError("trailing bytes after payload")
    return meta, arrays
