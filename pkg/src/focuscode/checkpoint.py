"""Single-file checkpoint container.

Layout::

    b"FCKPT\\x00\\x01\\x00"            8-byte magic
    uint64 little-endian           manifest length in bytes
    manifest                       UTF-8 JSON, sorted keys
    arrays                         little-endian float32, manifest order

The manifest carries ``schema_version``, ``kind`` and an ``arrays`` list of
``{"name", "shape"}`` entries; everything else is model-specific.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError, ParseError

MAGIC = b"FCKPT\x00\x01\x00"
SCHEMA_VERSION = 1
KINDS = ("tagger", "classifier", "binary-relevance")


def write_checkpoint(path, kind: str, manifest: dict, arrays: dict) -> None:
    if kind not in KINDS:
        raise ConfigError(f"unknown checkpoint kind {kind!r}")
    names = list(arrays)
    meta = dict(manifest)
    meta["schema_version"] = SCHEMA_VERSION
    meta["kind"] = kind
    meta["arrays"] = [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes())


def read_checkpoint(path, expect_kind: str | None = None):
    """Return ``(manifest, arrays)``; arrays come back as float32."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ParseError(f"{path}: not a focuscode checkpoint")
    (n,) = struct.unpack("<Q", data[8:16])
    try:
        meta = json.loads(data[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt manifest ({exc})") from None
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"{path}: unsupported schema_version {meta.get('schema_version')}")
    if expect_kind is not None and meta.get("kind") != expect_kind:
        raise ConfigError(f"{path}: expected a {expect_kind} checkpoint, found {meta.get('kind')!r}")
    arrays = {}
    off = 16 + n
    for entry in meta["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = off + 4 * count
        if end > len(data):
            raise ParseError(f"{path}: truncated array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data[off:end], dtype="<f4").reshape(shape).astype(np.float32)
        off = end
    if off != len(data):
        raise ParseError(f"{path}: {len(data) - off} trailing bytes")
    return meta, arrays
