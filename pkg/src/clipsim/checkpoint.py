"""CSN1 tensor container: named float arrays plus a JSON metadata block.

Layout (integers little-endian), mirroring the feature-store discipline:

    bytes 0..3   magic "CSN1"
    bytes 4..7   u32 format version (currently 1)
    next         u32 table length, then that many bytes of UTF-8 JSON
    rest         float32 little-endian tensor payloads, concatenated in
                 table order

The JSON table lists tensor names and shapes (sorted by name so writes are
byte-reproducible) and carries an arbitrary "meta" dict for model config.
"""

import json
import struct

import numpy as np

from .errors import (
    BadMagicError,
    ManifestError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"CSN1"
FORMAT_VERSION = 1


def write_tensors(path, tensors: dict, meta: dict | None = None) -> None:
    names = sorted(tensors)
    table = {
        "meta": meta or {},
        "tensors": [{"name": n, "shape": list(np.shape(tensors[n]))} for n in names],
    }
    table_bytes = json.dumps(table, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(table_bytes)))
        f.write(table_bytes)
        for n in names:
            f.write(np.ascontiguousarray(tensors[n], dtype="<f4").tobytes())


def read_tensors(path):
    """Returns (tensors, meta); tensors come back as float64 arrays."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (table_len,) = struct.unpack_from("<I", blob, 8)
    table_end = 12 + table_len
    if table_end > len(blob):
        raise TruncatedPayloadError(f"{path}: table extends past end of file")
    try:
        table = json.loads(blob[12:table_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"{path}: table is not valid JSON: {e}") from e

    entries = table.get("tensors")
    if not isinstance(entries, list):
        raise ManifestError(f"{path}: table has no tensor list")
    total = sum(int(np.prod(e["shape"], dtype=np.int64)) for e in entries) * 4
    payload = blob[table_end:]
    if len(payload) != total:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} bytes, table requires {total}")

    tensors = {}
    offset = 0
    for e in entries:
        shape = tuple(int(s) for s in e["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        tensors[e["name"]] = arr.astype(np.float64).reshape(shape)
    return tensors, table.get("meta", {})
