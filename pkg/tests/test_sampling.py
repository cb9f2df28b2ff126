"""Frame, clip-start, and PK batch sampling checks."""

import numpy as np
import pytest

from clipsim import sampling
from clipsim.errors import ConfigError, InvalidArgumentError, SequenceTooShortError


class FakeTracklet:
    def __init__(self, tid, pid):
        self.tracklet_id = tid
        self.person_id = pid


class TestFrameIndices:
    def test_evenly_12_4(self):
        out = sampling.sample_frame_indices(12, 4, "evenly", np.random.default_rng(0))
        assert out.indices == (0, 4, 7, 11)
        assert not out.with_replacement

    def test_evenly_includes_endpoints(self):
        for n in (4, 5, 9, 17, 100):
            out = sampling.sample_frame_indices(n, 4, "evenly", np.random.default_rng(0))
            assert out.indices[0] == 0 and out.indices[-1] == n - 1
            assert list(out.indices) == sorted(set(out.indices))

    def test_evenly_length_one(self):
        out = sampling.sample_frame_indices(9, 1, "evenly", np.random.default_rng(0))
        assert out.indices == (0,)

    def test_all_returns_range(self):
        out = sampling.sample_frame_indices(5, 4, "all", np.random.default_rng(0))
        assert out.indices == (0, 1, 2, 3, 4)

    def test_consec_forced_case(self):
        out = sampling.sample_frame_indices(4, 4, "consec", np.random.default_rng(0))
        assert out.indices == (0, 1, 2, 3)

    def test_consec_is_contiguous(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            out = sampling.sample_frame_indices(20, 4, "consec", rng)
            diffs = np.diff(out.indices)
            assert np.all(diffs == 1)
            assert 0 <= out.indices[0] <= 16

    def test_consec_start_covers_range(self):
        rng = np.random.default_rng(2)
        starts = {
            sampling.sample_frame_indices(6, 4, "consec", rng).indices[0] for _ in range(200)
        }
        assert starts == {0, 1, 2}

    def test_random_sorted_distinct(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            out = sampling.sample_frame_indices(10, 4, "random", rng)
            assert len(set(out.indices)) == 4
            assert list(out.indices) == sorted(out.indices)
            assert not out.with_replacement

    def test_random_short_sequence_flagged(self):
        out = sampling.sample_frame_indices(2, 4, "random", np.random.default_rng(4))
        assert out.with_replacement
        assert len(out.indices) == 4
        assert all(0 <= i < 2 for i in out.indices)

    def test_consec_short_sequence_wraps(self):
        out = sampling.sample_frame_indices(3, 5, "consec", np.random.default_rng(5))
        assert out.with_replacement
        assert out.indices == (0, 1, 2, 0, 1)

    def test_evenly_short_sequence_wraps(self):
        out = sampling.sample_frame_indices(2, 4, "evenly", np.random.default_rng(6))
        assert out.with_replacement
        assert out.indices == (0, 1, 0, 1)

    def test_bad_method(self):
        with pytest.raises(InvalidArgumentError):
            sampling.sample_frame_indices(10, 4, "stride", np.random.default_rng(0))

    def test_bad_length(self):
        with pytest.raises(InvalidArgumentError):
            sampling.sample_frame_indices(0, 4, "evenly", np.random.default_rng(0))


class TestClipStarts:
    def test_exact_division_disjoint(self):
        starts = sampling.sample_clip_starts(32, 8, 4)
        assert starts == [0, 4, 8, 12, 16, 20, 24, 28]

    def test_overlapping(self):
        starts = sampling.sample_clip_starts(8, 8, 4)
        assert starts == [0, 1, 1, 2, 2, 3, 3, 4]

    def test_single_clip_centered(self):
        assert sampling.sample_clip_starts(4, 1, 4) == [0]
        assert sampling.sample_clip_starts(10, 1, 4) == [3]

    def test_covers_full_range(self):
        for n in (8, 9, 20, 33):
            starts = sampling.sample_clip_starts(n, 8, 4)
            assert starts[0] == 0
            assert starts[-1] == n - 4
            assert all(a <= b for a, b in zip(starts, starts[1:]))

    def test_too_short_raises(self):
        with pytest.raises(SequenceTooShortError):
            sampling.sample_clip_starts(3, 8, 4)


class TestPKBatch:
    def make_pool(self, ids_with_counts):
        pool = []
        for pid, count in ids_with_counts:
            for j in range(count):
                pool.append(FakeTracklet(f"p{pid}_t{j}", pid))
        return pool

    def test_batch_sizes(self):
        pool = self.make_pool([(i, 5) for i in range(20)])
        b8 = sampling.sample_pk_batch(pool, 8, 4, np.random.default_rng(0))
        assert len(b8.tracklets) == 32
        b12 = sampling.sample_pk_batch(pool, 12, 4, np.random.default_rng(0))
        assert len(b12.tracklets) == 48

    def test_grouping_exact(self):
        pool = self.make_pool([(i, 6) for i in range(10)])
        batch = sampling.sample_pk_batch(pool, 4, 3, np.random.default_rng(1))
        uniq, counts = np.unique(batch.labels, return_counts=True)
        assert len(uniq) == 4
        assert np.all(counts == 3)

    def test_labels_match_tracklets(self):
        pool = self.make_pool([(i, 4) for i in range(6)])
        batch = sampling.sample_pk_batch(pool, 3, 2, np.random.default_rng(2))
        for t, label in zip(batch.tracklets, batch.labels):
            assert t.person_id == label

    def test_replacement_when_scarce(self):
        pool = self.make_pool([(0, 2), (1, 2)])
        batch = sampling.sample_pk_batch(pool, 2, 4, np.random.default_rng(3))
        assert len(batch.tracklets) == 8
        for pid in (0, 1):
            ids = {t.tracklet_id for t, l in zip(batch.tracklets, batch.labels) if l == pid}
            assert len(ids) <= 2

    def test_no_duplicates_when_plentiful(self):
        pool = self.make_pool([(0, 8), (1, 8)])
        for seed in range(20):
            batch = sampling.sample_pk_batch(pool, 2, 4, np.random.default_rng(seed))
            ids = [t.tracklet_id for t in batch.tracklets]
            assert len(set(ids)) == 8

    def test_too_few_identities(self):
        pool = self.make_pool([(0, 5), (1, 5)])
        with pytest.raises(ConfigError):
            sampling.sample_pk_batch(pool, 3, 2, np.random.default_rng(0))

    def test_deterministic_under_seed(self):
        pool = self.make_pool([(i, 5) for i in range(15)])
        a = sampling.sample_pk_batch(pool, 6, 3, np.random.default_rng(42))
        b = sampling.sample_pk_batch(pool, 6, 3, np.random.default_rng(42))
        assert [t.tracklet_id for t in a.tracklets] == [t.tracklet_id for t in b.tracklets]
