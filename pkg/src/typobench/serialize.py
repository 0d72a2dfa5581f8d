"""Versioned binary checkpoint container shared by all model types.

Layout: 5 magic bytes, uint32 little-endian format version, uint64
little-endian metadata length, UTF-8 JSON metadata (sorted keys), then the
raw parameter arrays concatenated as little-endian float64 in the order
listed under the metadata's "arrays" key.  Provenance (tool version,
subcommand, seed, input digests) travels inside the metadata block, since a
binary file cannot carry the '#' header comments that text artifacts do.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = ["CheckpointError", "FORMAT_VERSION", "read_checkpoint", "write_checkpoint"]

FORMAT_VERSION = 1
_MAGIC_LEN = 5


class CheckpointError(ValueError):
    """Raised when a checkpoint file fails structural validation."""


def write_checkpoint(path, magic: bytes, meta: dict, arrays) -> None:
    """Write `arrays` (ordered (name, ndarray) pairs) under `magic`.

    The array names and shapes are recorded in the metadata so the reader
    can validate sizes before touching the payload.
    """
    if len(magic) != _MAGIC_LEN:
        raise ValueError(f"magic must be {_MAGIC_LEN} bytes, got {magic!r}")
    arrays = [(name, np.ascontiguousarray(a, dtype="<f8")) for name, a in arrays]
    meta = dict(meta)
    meta["arrays"] = [[name, list(a.shape)] for name, a in arrays]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(a.tobytes())


def read_checkpoint(path, magic: bytes):
    """Validate and load a checkpoint; returns (meta, {name: array}).

    Every failure names the field that broke: magic, version, metadata, or
    the specific truncated array.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:_MAGIC_LEN] != magic:
        raise CheckpointError(
            f"bad magic: expected {magic!r}, found {raw[:_MAGIC_LEN]!r}"
        )
    off = _MAGIC_LEN
    if len(raw) < off + 12:
        raise CheckpointError("truncated header: version/length fields missing")
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"format version mismatch: file has {version}, reader expects {FORMAT_VERSION}"
        )
    (meta_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + meta_len:
        raise CheckpointError("truncated metadata block")
    try:
        meta = json.loads(raw[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"metadata is not valid JSON: {err}") from err
    off += meta_len
    if "arrays" not in meta:
        raise CheckpointError("metadata missing the 'arrays' manifest")
    out = {}
    for name, shape in meta["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * 8
        if len(raw) < off + nbytes:
            raise CheckpointError(f"truncated array {name!r}: need {nbytes} bytes")
        out[name] = (
            np.frombuffer(raw, dtype="<f8", count=n, offset=off)
            .reshape(shape)
            .astype(np.float64)
        )
        off += nbytes
    if off != len(raw):
        raise CheckpointError(f"{len(raw) - off} trailing bytes after last array")
    return meta, out
