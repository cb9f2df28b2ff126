"""Contract checks against the consumer package.

The extractor itself never imports the consumer; these tests do, to prove
the produced files load there bit-exactly and carry the right metadata.
"""

import hashlib
import json

import numpy as np
import pytest

from clipextract.extract import ClipSpec, CorruptionSpec, ExtractJob, extract
from clipsim import cli as consumer_cli
from clipsim.store import read_store


@pytest.fixture
def small_store(frame_root, tmp_path):
    path = tmp_path / "features.csf"
    summary = extract(ExtractJob(input_dir=str(frame_root), output_path=str(path),
                                 backbone="rand3d-64"))
    return path, summary


class TestRoundTrip:
    def test_consumer_reads_extractor_output(self, small_store):
        path, summary = small_store
        store = read_store(path)
        assert store.feature_dim == 64 == summary["feature_dim"]
        assert len(store.tracklets) == 4 == summary["tracklets"]
        assert store.identity_count == 2 == summary["identities"]
        t = store.by_id("0001_c1")
        assert t.person_id == 1 and t.camera_id == 1
        assert t.num_frames == 32 and t.num_clips == 8
        assert {x.split for x in store.tracklets} == {"train"}
        assert store.extra["backbone"] == "rand3d-64"

    def test_corruption_off_means_mask_all_false(self, small_store):
        path, _ = small_store
        for t in read_store(path).tracklets:
            assert t.corrupted_mask is not None
            assert not t.corrupted_mask.any()

    def test_short_tracklet_still_yields_every_clip(self, small_store):
        path, _ = small_store
        t = read_store(path).by_id("0002_c2")
        assert t.num_frames == 3 and t.num_clips == 8

    def test_default_backbone_loads_in_consumer_cli_at_1024(self, tmp_path, capsys,
                                                            make_tracklet):
        root = tmp_path / "frames"
        make_tracklet(root, "0007_c1", 8, 5)
        path = tmp_path / "features.csf"
        extract(ExtractJob(input_dir=str(root), output_path=str(path)))
        rc = consumer_cli.main(["store-info", "--store", str(path)])
        assert rc == 0
        info = json.loads(capsys.readouterr().out)
        assert info["feature_dim"] == 1024
        assert info["tracklets"] == 1

    def test_corruption_changes_only_masked_clips(self, frame_root, tmp_path):
        clean_path = tmp_path / "clean.csf"
        corr_path = tmp_path / "corr.csf"
        extract(ExtractJob(input_dir=str(frame_root), output_path=str(clean_path),
                           backbone="rand3d-64"))
        extract(ExtractJob(input_dir=str(frame_root), output_path=str(corr_path),
                           backbone="rand3d-64",
                           corruption=CorruptionSpec(max_corrupted=3), seed=7))
        clean = read_store(clean_path)
        corr = read_store(corr_path)
        flipped = 0
        for tc, tk in zip(clean.tracklets, corr.tracklets):
            assert tc.tracklet_id == tk.tracklet_id
            for ci in range(tk.num_clips):
                if tk.corrupted_mask[ci]:
                    flipped += 1
                    assert not np.allclose(tk.clip_features[ci], tc.clip_features[ci])
                else:
                    np.testing.assert_array_equal(tk.clip_features[ci],
                                                  tc.clip_features[ci])
        assert flipped > 0

    def test_same_seed_gives_identical_bytes(self, frame_root, tmp_path):
        digests = []
        for name in ("a.csf", "b.csf"):
            path = tmp_path / name
            extract(ExtractJob(input_dir=str(frame_root), output_path=str(path),
                               backbone="rand3d-32",
                               clips=ClipSpec(method="random"),
                               corruption=CorruptionSpec(max_corrupted=2), seed=5))
            digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_split_flag_round_trips(self, frame_root, tmp_path):
        path = tmp_path / "q.csf"
        extract(ExtractJob(input_dir=str(frame_root), output_path=str(path),
                           backbone="rand3d-32", split="query"))
        assert {t.split for t in read_store(path).tracklets} == {"query"}
