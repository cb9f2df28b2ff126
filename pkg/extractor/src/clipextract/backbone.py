"""Clip feature backbones.

Every backbone maps a clip of frames, shaped (L, 256, 128, 3) in [-1, 1],
to a fixed-size float32 vector. The rand3d family is a deterministic
random-projection stand-in for a pretrained video network: cheap, seedless
at run time, and stable across processes because its weights derive from a
hash of the backbone name.
"""

import hashlib
import re

import numpy as np

from .errors import ShapeError, UnknownBackboneError
from .pixels import FRAME_HEIGHT, FRAME_WIDTH

POOL_ROWS = 16
POOL_COLS = 8
_RAND3D_RE = re.compile(r"^rand3d-(\d+)$")

DEFAULT_BACKBONE = "rand3d-1024"


def _pool_frames(clip: np.ndarray) -> np.ndarray:
    """Block-mean pool each frame down to (POOL_ROWS, POOL_COLS, 3)."""
    if clip.ndim != 4 or clip.shape[1:] != (FRAME_HEIGHT, FRAME_WIDTH, 3):
        raise ShapeError(f"expected clip shaped (L, {FRAME_HEIGHT}, {FRAME_WIDTH}, 3), "
                         f"got {clip.shape}")
    length = clip.shape[0]
    rb = FRAME_HEIGHT // POOL_ROWS
    cb = FRAME_WIDTH // POOL_COLS
    blocks = clip.reshape(length, POOL_ROWS, rb, POOL_COLS, cb, 3)
    return blocks.mean(axis=(2, 4))


def _projection_matrix(name: str, in_dim: int, out_dim: int) -> np.ndarray:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(in_dim)
    return rng.normal(0.0, scale, size=(in_dim, out_dim)).astype(np.float32)


class Rand3dBackbone:
    """Pool spatially, summarize temporally, project, squash with tanh."""

    def __init__(self, name: str, dim: int):
        self.name = name
        self.dim = dim
        pooled = POOL_ROWS * POOL_COLS * 3
        self._weights = _projection_matrix(name, 2 * pooled, dim)

    def __call__(self, clip: np.ndarray) -> np.ndarray:
        pooled = _pool_frames(np.asarray(clip, dtype=np.float32))
        flat = pooled.reshape(pooled.shape[0], -1)
        summary = np.concatenate([flat.mean(axis=0), flat.std(axis=0)])
        return np.tanh(summary @ self._weights).astype(np.float32)


def get_backbone(name: str):
    """Resolve a backbone by name. Raises UnknownBackboneError otherwise."""
    match = _RAND3D_RE.match(name)
    if match:
        dim = int(match.group(1))
        if dim < 1:
            raise UnknownBackboneError(f"backbone {name!r} has a zero output width")
        return Rand3dBackbone(name, dim)
    raise UnknownBackboneError(f"unknown backbone {name!r}; available: rand3d-<dim>")
