"""Feature store round trips and corruption handling."""

import json
import struct

import numpy as np
import pytest

from clipsim import store
from clipsim.errors import (
    BadMagicError,
    InconsistentDimensionError,
    InvalidArgumentError,
    ManifestError,
    TruncatedPayloadError,
    VersionMismatchError,
)


def make_tracklets(n=5, m=3, d=8, seed=0, split="train"):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        out.append(
            store.Tracklet(
                tracklet_id=f"t{i:04d}",
                person_id=i // 2,
                camera_id=i % 2,
                num_frames=10 + i,
                clip_features=rng.normal(size=(m, d)).astype(np.float32).astype(np.float64),
                split=split,
            )
        )
    return out


class TestRoundTrip:
    def test_exact_at_f32(self, tmp_path):
        tracklets = make_tracklets(n=100, m=4, d=16, seed=3)
        path = tmp_path / "a.csf"
        store.write_store(tracklets, path)
        loaded = store.read_store(path)
        assert loaded.feature_dim == 16
        assert len(loaded.tracklets) == 100
        for orig, back in zip(tracklets, loaded.tracklets):
            assert back.tracklet_id == orig.tracklet_id
            assert back.person_id == orig.person_id
            assert back.camera_id == orig.camera_id
            assert back.num_frames == orig.num_frames
            assert back.split == orig.split
            # inputs were quantized to f32 before writing, so equality is exact
            assert np.array_equal(back.clip_features, orig.clip_features)

    def test_write_is_deterministic(self, tmp_path):
        tracklets = make_tracklets(seed=4)
        p1, p2 = tmp_path / "x.csf", tmp_path / "y.csf"
        store.write_store(tracklets, p1, extra={"gamma": 0.85})
        store.write_store(tracklets, p2, extra={"gamma": 0.85})
        assert p1.read_bytes() == p2.read_bytes()

    def test_file_size_formula(self, tmp_path):
        n, m, d = 7, 3, 12
        tracklets = make_tracklets(n=n, m=m, d=d, seed=5)
        path = tmp_path / "sized.csf"
        store.write_store(tracklets, path)
        blob = path.read_bytes()
        (manifest_len,) = struct.unpack_from("<I", blob, 16)
        assert len(blob) == 20 + manifest_len + n * m * d * 4

    def test_corrupted_mask_round_trip(self, tmp_path):
        t = make_tracklets(n=1, m=4)[0]
        t.corrupted_mask = np.array([True, False, True, False])
        path = tmp_path / "mask.csf"
        store.write_store([t], path)
        back = store.read_store(path).tracklets[0]
        assert np.array_equal(back.corrupted_mask, t.corrupted_mask)

    def test_extra_metadata_round_trip(self, tmp_path):
        path = tmp_path / "meta.csf"
        extra = {"seed": 11, "gamma": 0.85, "note": "unit test"}
        store.write_store(make_tracklets(), path, extra=extra)
        assert store.read_store(path).extra == extra

    def test_checksum_stable(self, tmp_path):
        tracklets = make_tracklets(seed=6)
        path = tmp_path / "sum.csf"
        store.write_store(tracklets, path)
        loaded = store.read_store(path)
        direct = store.FeatureStore(feature_dim=8, tracklets=tracklets)
        assert loaded.feature_checksum() == direct.feature_checksum()


class TestErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.csf"
        store.write_store(make_tracklets(), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            store.read_store(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v9.csf"
        store.write_store(make_tracklets(), path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 4, 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatchError):
            store.read_store(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "cut.csf"
        store.write_store(make_tracklets(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(TruncatedPayloadError):
            store.read_store(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "extra.csf"
        store.write_store(make_tracklets(), path)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(TruncatedPayloadError):
            store.read_store(path)

    def test_manifest_not_json(self, tmp_path):
        path = tmp_path / "noj.csf"
        store.write_store(make_tracklets(n=1, m=1, d=2), path)
        blob = bytearray(path.read_bytes())
        (manifest_len,) = struct.unpack_from("<I", blob, 16)
        blob[20 : 20 + manifest_len] = b"{" * manifest_len
        path.write_bytes(bytes(blob))
        with pytest.raises(ManifestError):
            store.read_store(path)

    def test_header_manifest_dim_conflict(self, tmp_path):
        path = tmp_path / "dim.csf"
        store.write_store(make_tracklets(d=8), path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 8, 16)
        path.write_bytes(bytes(blob))
        with pytest.raises(InconsistentDimensionError):
            store.read_store(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csf"
        path.write_bytes(b"")
        with pytest.raises(TruncatedPayloadError):
            store.read_store(path)

    def test_write_rejects_empty_list(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            store.write_store([], tmp_path / "none.csf")

    def test_write_rejects_mixed_dims(self, tmp_path):
        ts = make_tracklets(n=2, d=8)
        ts[1].clip_features = np.zeros((3, 16))
        with pytest.raises(InconsistentDimensionError):
            store.write_store(ts, tmp_path / "mix.csf")

    def test_write_rejects_duplicate_ids(self, tmp_path):
        ts = make_tracklets(n=2)
        ts[1].tracklet_id = ts[0].tracklet_id
        with pytest.raises(InvalidArgumentError):
            store.write_store(ts, tmp_path / "dup.csf")

    def test_write_rejects_nan(self, tmp_path):
        ts = make_tracklets(n=1)
        ts[0].clip_features[0, 0] = np.nan
        with pytest.raises(InvalidArgumentError):
            store.write_store(ts, tmp_path / "nan.csf")

    def test_query_gallery_overlap_rejected(self, tmp_path):
        ts = make_tracklets(n=2)
        ts[0].split = "query"
        ts[1].split = "gallery"
        path = tmp_path / "ql.csf"
        store.write_store(ts, path)
        # rewrite the manifest so one id sits in both eval splits
        blob = bytearray(path.read_bytes())
        (manifest_len,) = struct.unpack_from("<I", blob, 16)
        manifest = json.loads(blob[20 : 20 + manifest_len].decode())
        manifest["tracklets"][1]["tracklet_id"] = manifest["tracklets"][0]["tracklet_id"]
        new_manifest = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        new_blob = blob[:16] + struct.pack("<I", len(new_manifest)) + new_manifest + blob[20 + manifest_len :]
        path.write_bytes(bytes(new_blob))
        with pytest.raises(ManifestError):
            store.read_store(path)


class TestSplits:
    def test_select_preserves_order(self, tmp_path):
        ts = make_tracklets(n=6)
        for i, t in enumerate(ts):
            t.split = ("train", "query", "gallery")[i % 3]
        path = tmp_path / "sp.csf"
        store.write_store(ts, path)
        loaded = store.read_store(path)
        got = [t.tracklet_id for t in store.select_split(loaded, "query")]
        assert got == ["t0001", "t0004"]

    def test_unknown_split_rejected(self):
        st = store.FeatureStore(feature_dim=8, tracklets=make_tracklets())
        with pytest.raises(InvalidArgumentError):
            store.select_split(st, "validation")
