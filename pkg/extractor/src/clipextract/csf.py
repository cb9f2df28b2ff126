"""CSF1 writer.

Independent implementation of the clip-feature store format so extraction
output can be consumed by any CSF1 reader. Layout, little-endian throughout:

    bytes 0..3    magic "CSF1"
    bytes 4..7    u32 format version (1)
    bytes 8..11   u32 feature dimension D
    bytes 12..15  u32 tracklet count
    next          u32 manifest length, then that many bytes of UTF-8 JSON
    rest          float32 clip features, concatenated in manifest order

The manifest JSON is canonical (sorted keys, no whitespace) so identical
inputs produce byte-identical files.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, UsageError

MAGIC = b"CSF1"
FORMAT_VERSION = 1
SPLITS = ("train", "query", "gallery")


@dataclass
class TrackletRecord:
    """One extracted tracklet: clip feature matrix plus metadata."""

    tracklet_id: str
    person_id: int
    camera_id: int
    num_frames: int
    clip_features: np.ndarray  # (M, D) float32
    split: str = "train"
    corrupted_mask: list | None = None
    extra: dict = field(default_factory=dict)


def write_csf(records: list, path, extra: dict | None = None) -> None:
    """Serialize tracklet records to one CSF1 file."""
    if not records:
        raise UsageError("nothing to write: no tracklets were extracted")
    dim = int(records[0].clip_features.shape[1])
    seen = set()
    manifest_rows = []
    for rec in records:
        feats = np.asarray(rec.clip_features)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ShapeError(f"tracklet {rec.tracklet_id}: features must be (M, D) with M >= 1")
        if feats.shape[1] != dim:
            raise ShapeError(f"tracklet {rec.tracklet_id}: D={feats.shape[1]} differs from {dim}")
        if not np.all(np.isfinite(feats)):
            raise ShapeError(f"tracklet {rec.tracklet_id}: non-finite features")
        if rec.split not in SPLITS:
            raise UsageError(f"tracklet {rec.tracklet_id}: unknown split {rec.split!r}")
        if rec.corrupted_mask is not None and len(rec.corrupted_mask) != feats.shape[0]:
            raise ShapeError(f"tracklet {rec.tracklet_id}: mask length != clip count")
        if rec.tracklet_id in seen:
            raise UsageError(f"duplicate tracklet_id {rec.tracklet_id!r}")
        seen.add(rec.tracklet_id)
        manifest_rows.append({
            "tracklet_id": rec.tracklet_id,
            "person_id": int(rec.person_id),
            "camera_id": int(rec.camera_id),
            "num_frames": int(rec.num_frames),
            "num_clips": int(feats.shape[0]),
            "split": rec.split,
            "corrupted_mask": None
            if rec.corrupted_mask is None
            else [bool(x) for x in rec.corrupted_mask],
        })

    manifest = {
        "feature_dim": dim,
        "identity_count": len({r.person_id for r in records}),
        "extra": extra or {},
        "tracklets": manifest_rows,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, dim, len(records)))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for rec in records:
            f.write(np.ascontiguousarray(rec.clip_features, dtype="<f4").tobytes())
