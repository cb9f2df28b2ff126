"""CSF1 feature store: on-disk clip features plus tracklet metadata.

Layout (all integers little-endian):

    bytes 0..3    magic "CSF1"
    bytes 4..7    u32 format version (currently 1)
    bytes 8..11   u32 feature dimension D
    bytes 12..15  u32 tracklet count
    next          u32 manifest length, then that many bytes of UTF-8 JSON
    rest          float32 little-endian clip features, concatenated in
                  manifest order (tracklet by tracklet, clip by clip)

Features are stored as 32-bit floats and widened to float64 in memory, so a
write/read round trip is exact at 32-bit precision. The manifest JSON is
canonical (sorted keys, no whitespace) to keep writes byte-reproducible.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    InconsistentDimensionError,
    InvalidArgumentError,
    ManifestError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"CSF1"
FORMAT_VERSION = 1
SPLITS = ("train", "query", "gallery")


@dataclass
class Tracklet:
    """One person observation: M clip features plus identity metadata."""

    tracklet_id: str
    person_id: int
    camera_id: int
    num_frames: int
    clip_features: np.ndarray  # (M, D) float64
    split: str = "train"
    corrupted_mask: np.ndarray | None = None  # (M,) bool

    @property
    def num_clips(self) -> int:
        return self.clip_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.clip_features.shape[1]


@dataclass
class FeatureStore:
    feature_dim: int
    tracklets: list[Tracklet]
    extra: dict = field(default_factory=dict)

    @property
    def identity_count(self) -> int:
        return len({t.person_id for t in self.tracklets})

    def by_id(self, tracklet_id: str) -> Tracklet:
        for t in self.tracklets:
            if t.tracklet_id == tracklet_id:
                return t
        raise InvalidArgumentError(f"no tracklet {tracklet_id!r} in store")

    def feature_checksum(self) -> str:
        """SHA-256 over the float32 payload; used to assert frozen features."""
        h = hashlib.sha256()
        for t in self.tracklets:
            h.update(np.ascontiguousarray(t.clip_features, dtype="<f4").tobytes())
        return h.hexdigest()


def _validate_tracklets(tracklets: list[Tracklet]) -> int:
    if not tracklets:
        raise InvalidArgumentError("cannot write a store with no tracklets")
    dim = tracklets[0].clip_features.shape[1]
    seen = set()
    for t in tracklets:
        feats = np.asarray(t.clip_features)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise InvalidArgumentError(f"tracklet {t.tracklet_id}: features must be (M, D) with M >= 1")
        if feats.shape[1] != dim:
            raise InconsistentDimensionError(
                f"tracklet {t.tracklet_id}: D={feats.shape[1]} differs from {dim}"
            )
        if not np.all(np.isfinite(feats)):
            raise InvalidArgumentError(f"tracklet {t.tracklet_id}: non-finite features")
        if t.corrupted_mask is not None and len(t.corrupted_mask) != feats.shape[0]:
            raise InvalidArgumentError(f"tracklet {t.tracklet_id}: mask length != clip count")
        if t.split not in SPLITS:
            raise InvalidArgumentError(f"tracklet {t.tracklet_id}: unknown split {t.split!r}")
        if t.tracklet_id in seen:
            raise InvalidArgumentError(f"duplicate tracklet_id {t.tracklet_id!r}")
        seen.add(t.tracklet_id)
    return dim


def write_store(tracklets: list[Tracklet], path, extra: dict | None = None) -> None:
    dim = _validate_tracklets(tracklets)
    records = []
    for t in tracklets:
        rec = {
            "tracklet_id": t.tracklet_id,
            "person_id": int(t.person_id),
            "camera_id": int(t.camera_id),
            "num_frames": int(t.num_frames),
            "num_clips": int(t.num_clips),
            "split": t.split,
            "corrupted_mask": None
            if t.corrupted_mask is None
            else [bool(x) for x in t.corrupted_mask],
        }
        records.append(rec)
    manifest = {
        "feature_dim": dim,
        "identity_count": len({t.person_id for t in tracklets}),
        "extra": extra or {},
        "tracklets": records,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, dim, len(tracklets)))
        f.write(struct.pack("<I", len(manifest_bytes)))
        f.write(manifest_bytes)
        for t in tracklets:
            f.write(np.ascontiguousarray(t.clip_features, dtype="<f4").tobytes())


def read_store(path) -> FeatureStore:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 20:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    version, dim, count = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (manifest_len,) = struct.unpack_from("<I", blob, 16)
    manifest_end = 20 + manifest_len
    if manifest_end > len(blob):
        raise TruncatedPayloadError(f"{path}: manifest extends past end of file")
    try:
        manifest = json.loads(blob[20:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"{path}: manifest is not valid JSON: {e}") from e

    records = manifest.get("tracklets")
    if not isinstance(records, list) or len(records) != count:
        raise ManifestError(f"{path}: manifest lists {len(records or [])} tracklets, header says {count}")
    if manifest.get("feature_dim") != dim:
        raise InconsistentDimensionError(
            f"{path}: manifest D={manifest.get('feature_dim')} != header D={dim}"
        )

    expected_payload = sum(int(r["num_clips"]) for r in records) * dim * 4
    payload = blob[manifest_end:]
    if len(payload) < expected_payload:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, manifest requires {expected_payload}"
        )
    if len(payload) > expected_payload:
        raise TruncatedPayloadError(f"{path}: {len(payload) - expected_payload} trailing payload bytes")

    tracklets = []
    offset = 0
    for rec in records:
        m = int(rec["num_clips"])
        feats = np.frombuffer(payload, dtype="<f4", count=m * dim, offset=offset)
        offset += m * dim * 4
        if not np.all(np.isfinite(feats)):
            raise ManifestError(f"{path}: tracklet {rec['tracklet_id']}: non-finite payload")
        mask = rec.get("corrupted_mask")
        if mask is not None and len(mask) != m:
            raise ManifestError(f"{path}: tracklet {rec['tracklet_id']}: mask length != clip count")
        tracklets.append(
            Tracklet(
                tracklet_id=rec["tracklet_id"],
                person_id=int(rec["person_id"]),
                camera_id=int(rec["camera_id"]),
                num_frames=int(rec["num_frames"]),
                clip_features=feats.astype(np.float64).reshape(m, dim),
                split=rec["split"],
                corrupted_mask=None if mask is None else np.asarray(mask, dtype=bool),
            )
        )

    store = FeatureStore(feature_dim=dim, tracklets=tracklets, extra=manifest.get("extra", {}))
    q_ids = {t.tracklet_id for t in store.tracklets if t.split == "query"}
    g_ids = {t.tracklet_id for t in store.tracklets if t.split == "gallery"}
    if q_ids & g_ids:
        raise ManifestError(f"{path}: query and gallery share tracklets {sorted(q_ids & g_ids)[:3]}")
    return store


def select_split(store: FeatureStore, split: str) -> list[Tracklet]:
    if split not in SPLITS:
        raise InvalidArgumentError(f"unknown split {split!r}, expected one of {SPLITS}")
    return [t for t in store.tracklets if t.split == split]
