"""Directory-to-CSF1 extraction pipeline.

Walks an input directory with one folder per tracklet (folder name
``<person>_c<camera>``, e.g. ``0005_c2``, holding ordered frame images),
cuts clips with the shared index formulas, optionally corrupts a random
subset of clips in pixel space, runs the backbone, and writes one CSF1
feature file.
"""

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import DEFAULT_BACKBONE, get_backbone
from .csf import SPLITS, TrackletRecord, write_csf
from .errors import UsageError
from .indices import FRAME_METHODS, clip_starts, cyclic_pad_indices, frame_indices
from .pixels import corrupt_frame, list_frames, load_frame, to_unit_range

FOLDER_RE = re.compile(r"^(\d+)_c(\d+)")


@dataclass(frozen=True)
class ClipSpec:
    """How many clips to cut, how long, and how frames are picked."""

    num_clips: int = 8
    clip_length: int = 4
    method: str = "consec"

    def __post_init__(self):
        if self.num_clips < 1 or self.clip_length < 1:
            raise UsageError("num_clips and clip_length must be >= 1")
        if self.method not in FRAME_METHODS:
            raise UsageError(f"unknown frame method {self.method!r}; choose from {FRAME_METHODS}")


@dataclass(frozen=True)
class CorruptionSpec:
    """Pixel-space degradation: downscale, JPEG-compress, rescale."""

    max_corrupted: int = 0
    downscale: int = 5
    jpeg_quality: int = 30

    def __post_init__(self):
        if self.max_corrupted < 0:
            raise UsageError("max corrupted clip count must be >= 0")
        if self.downscale < 1:
            raise UsageError("downscale factor must be >= 1")
        if not 1 <= self.jpeg_quality <= 95:
            raise UsageError("jpeg quality must lie in [1, 95]")


@dataclass
class ExtractJob:
    input_dir: str
    output_path: str
    clips: ClipSpec = field(default_factory=ClipSpec)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    backbone: str = DEFAULT_BACKBONE
    split: str = "train"
    seed: int = 0


def _tracklet_rng(seed: int, tracklet_id: str) -> np.random.Generator:
    """Stream keyed on (run seed, tracklet name) so order of folders is moot."""
    digest = hashlib.sha256(tracklet_id.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def clip_frame_indices(n: int, spec: ClipSpec, rng: np.random.Generator) -> list:
    """Frame index list for each of the spec's clips.

    consec places windows at evenly spread deterministic starts; sequences
    shorter than one clip wrap cyclically. evenly and all are deterministic
    per tracklet, so every clip sees the same index set. random redraws
    frames independently for each clip.
    """
    if spec.method == "consec":
        if n >= spec.clip_length:
            starts = clip_starts(n, spec.num_clips, spec.clip_length)
            return [list(range(s, s + spec.clip_length)) for s in starts]
        pad = cyclic_pad_indices(n, spec.clip_length)
        return [list(pad) for _ in range(spec.num_clips)]
    out = []
    for _ in range(spec.num_clips):
        idx, _ = frame_indices(n, spec.clip_length, spec.method, rng)
        out.append(list(idx))
    return out


def _corruption_mask(num_clips: int, max_corrupted: int, rng: np.random.Generator) -> list:
    count = 0
    if max_corrupted > 0:
        count = int(rng.integers(0, max_corrupted + 1))
    count = min(count, num_clips)
    mask = [False] * num_clips
    if count:
        for ci in rng.choice(num_clips, size=count, replace=False):
            mask[int(ci)] = True
    return mask


def extract(job: ExtractJob) -> dict:
    """Run one extraction job end to end; returns a summary dict."""
    net = get_backbone(job.backbone)
    if job.split not in SPLITS:
        raise UsageError(f"unknown split {job.split!r}, expected one of {SPLITS}")
    input_dir = Path(job.input_dir)
    if not input_dir.is_dir():
        raise UsageError(f"input directory {input_dir} does not exist")
    folders = sorted(p for p in input_dir.iterdir() if p.is_dir())
    if not folders:
        raise UsageError(f"input directory {input_dir} holds no tracklet folders")

    records = []
    corrupted_total = 0
    for folder in folders:
        match = FOLDER_RE.match(folder.name)
        if not match:
            raise UsageError(
                f"tracklet folder {folder.name!r} does not match <person>_c<camera>"
            )
        person_id, camera_id = int(match.group(1)), int(match.group(2))
        frames = list_frames(folder)
        n = len(frames)
        rng = _tracklet_rng(job.seed, folder.name)
        per_clip = clip_frame_indices(n, job.clips, rng)
        mask = _corruption_mask(len(per_clip), job.corruption.max_corrupted, rng)

        decoded = {}
        feats = []
        for ci, idx in enumerate(per_clip):
            clip_imgs = []
            for fi in idx:
                if fi not in decoded:
                    decoded[fi] = load_frame(frames[fi])
                img = decoded[fi]
                if mask[ci]:
                    img = corrupt_frame(img, job.corruption.downscale, job.corruption.jpeg_quality)
                clip_imgs.append(to_unit_range(img))
            feats.append(net(np.stack(clip_imgs, axis=0)))
        corrupted_total += sum(mask)
        records.append(TrackletRecord(
            tracklet_id=folder.name,
            person_id=person_id,
            camera_id=camera_id,
            num_frames=n,
            clip_features=np.stack(feats, axis=0),
            split=job.split,
            corrupted_mask=[bool(b) for b in mask],
        ))

    extra = {
        "backbone": job.backbone,
        "num_clips": job.clips.num_clips,
        "clip_length": job.clips.clip_length,
        "method": job.clips.method,
        "max_corrupted": job.corruption.max_corrupted,
        "downscale": job.corruption.downscale,
        "jpeg_quality": job.corruption.jpeg_quality,
        "split": job.split,
        "seed": job.seed,
    }
    write_csf(records, job.output_path, extra=extra)
    return {
        "tracklets": len(records),
        "identities": len({r.person_id for r in records}),
        "feature_dim": net.dim,
        "corrupted_clips": int(corrupted_total),
        "output": str(job.output_path),
    }
