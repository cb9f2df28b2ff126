"""Synthetic clip-feature datasets with controllable corruption.

Identities are unit prototype vectors; tracklets are noisy, camera-shifted
copies. Corruption blends selected clip features toward random directions,
which reproduces the structure of the occlusion study (some clips become
uninformative) entirely in feature space.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .numerics import l2_normalize
from .store import FeatureStore, Tracklet


@dataclass(frozen=True)
class SynthConfig:
    num_identities: int = 32
    cameras: int = 2
    tracklets_per_identity: int = 4
    clips_per_tracklet: int = 8
    feature_dim: int = 128
    identity_margin: float = 1.0
    intra_noise: float = 0.1
    camera_shift: float = 0.05
    corruption_gamma: float = 0.85
    max_corrupt_clips: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_identities < 1 or self.tracklets_per_identity < 1:
            raise InvalidArgumentError("need at least one identity and one tracklet each")
        if self.cameras < 1:
            raise InvalidArgumentError("cameras must be >= 1")
        if self.clips_per_tracklet < 1:
            raise InvalidArgumentError("clips_per_tracklet must be >= 1")
        if self.feature_dim < 1:
            raise InvalidArgumentError("feature_dim must be >= 1")
        if not 0.0 <= self.corruption_gamma <= 1.0:
            raise InvalidArgumentError("corruption_gamma must lie in [0, 1]")
        if not 0 <= self.max_corrupt_clips <= self.clips_per_tracklet:
            raise InvalidArgumentError("max_corrupt_clips must lie in [0, clips_per_tracklet]")
        if self.intra_noise < 0 or self.camera_shift < 0:
            raise InvalidArgumentError("noise scales must be >= 0")
        if self.identity_margin <= 0:
            raise InvalidArgumentError("identity_margin must be > 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _prototypes(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit prototypes, mutually orthogonal whenever count <= dim."""
    if count <= dim:
        a = rng.normal(size=(dim, count))
        q, r = np.linalg.qr(a)
        signs = np.where(np.diag(r) >= 0, 1.0, -1.0)
        return (q * signs).T
    protos = rng.normal(size=(count, dim))
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def corrupt_sequence(
    tracklet: Tracklet, max_corrupt_clips: int, gamma: float, rng: np.random.Generator
) -> Tracklet:
    """Blend a random subset of clips toward random unit directions.

    The number of corrupted clips is uniform on {0..max_corrupt_clips};
    untouched clips are bit-identical to the input. Returns a new tracklet,
    the input is never modified.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError(f"gamma={gamma} outside [0, 1]")
    m = tracklet.num_clips
    if max_corrupt_clips > m:
        raise InvalidArgumentError(f"max_corrupt_clips={max_corrupt_clips} exceeds clip count {m}")
    feats = tracklet.clip_features.copy()
    mask = np.zeros(m, dtype=bool)
    n_corrupt = int(rng.integers(0, max_corrupt_clips + 1))
    if n_corrupt > 0:
        picked = rng.choice(m, size=n_corrupt, replace=False)
        for idx in picked:
            noise = l2_normalize(rng.normal(size=feats.shape[1]))
            feats[idx] = l2_normalize((1.0 - gamma) * feats[idx] + gamma * noise)
            mask[idx] = True
    return Tracklet(
        tracklet_id=tracklet.tracklet_id,
        person_id=tracklet.person_id,
        camera_id=tracklet.camera_id,
        num_frames=tracklet.num_frames,
        clip_features=feats,
        split=tracklet.split,
        corrupted_mask=mask,
    )


def generate(cfg: SynthConfig) -> FeatureStore:
    """Build a full dataset with train/query/gallery splits.

    Per identity: tracklet 0 goes to query (camera 0), tracklet 1 to gallery
    (camera 1), the rest to train with cameras assigned round-robin. Query and
    gallery tracklets are corrupted here, once, so evaluation inputs are fixed
    by the seed; train tracklets are stored clean and corrupted by the trainer
    per epoch.
    """
    if cfg.tracklets_per_identity < 2:
        raise ConfigError("need at least 2 tracklets per identity for a query/gallery split")
    if cfg.cameras < 2:
        raise ConfigError("need at least 2 cameras so query and gallery views differ")

    root = np.random.SeedSequence(cfg.rng_seed)
    proto_rng, camera_rng, noise_rng, corrupt_rng = (
        np.random.default_rng(s) for s in root.spawn(4)
    )

    protos = _prototypes(cfg.num_identities, cfg.feature_dim, proto_rng)
    cam_offsets = camera_rng.normal(scale=cfg.camera_shift, size=(cfg.cameras, cfg.feature_dim))

    m = cfg.clips_per_tracklet
    tracklets = []
    for pid in range(cfg.num_identities):
        for j in range(cfg.tracklets_per_identity):
            if j == 0:
                split, cam = "query", 0
            elif j == 1:
                split, cam = "gallery", 1
            else:
                split, cam = "train", j % cfg.cameras
            base = cfg.identity_margin * protos[pid] + cam_offsets[cam]
            noise = noise_rng.normal(scale=cfg.intra_noise, size=(m, cfg.feature_dim))
            feats = np.stack([l2_normalize(base + noise[i]) for i in range(m)])
            t = Tracklet(
                tracklet_id=f"id{pid:04d}_t{j}",
                person_id=pid,
                camera_id=cam,
                num_frames=4 * m,  # nominal; synthetic tracklets carry no pixels
                clip_features=feats,
                split=split,
            )
            if split in ("query", "gallery") and cfg.max_corrupt_clips > 0:
                t = corrupt_sequence(t, cfg.max_corrupt_clips, cfg.corruption_gamma, corrupt_rng)
            tracklets.append(t)

    return FeatureStore(feature_dim=cfg.feature_dim, tracklets=tracklets, extra=cfg.to_dict())
