"""Frame loading, resizing, value scaling, and pixel-space corruption."""

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FrameReadError, ShapeError, UsageError

FRAME_HEIGHT = 256
FRAME_WIDTH = 128
FRAME_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def list_frames(folder) -> list:
    """Ordered frame image paths inside one tracklet folder."""
    folder = Path(folder)
    if not folder.is_dir():
        raise FrameReadError(f"tracklet folder {folder} does not exist")
    frames = sorted(p for p in folder.iterdir()
                    if p.suffix.lower() in FRAME_EXTENSIONS)
    if not frames:
        raise FrameReadError(f"tracklet folder {folder} holds no frame images")
    return frames


def load_frame(path) -> Image.Image:
    """Decode one frame and resize it to the backbone input size."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
    except (OSError, UnidentifiedImageError) as exc:
        raise FrameReadError(f"cannot read frame {path}: {exc}") from exc
    return img.resize((FRAME_WIDTH, FRAME_HEIGHT), Image.BILINEAR)


def corrupt_frame(img: Image.Image, downscale: int, jpeg_quality: int) -> Image.Image:
    """Degrade one frame: shrink, JPEG-compress, scale back up."""
    if downscale < 1:
        raise UsageError("downscale factor must be >= 1")
    if not 1 <= jpeg_quality <= 95:
        raise UsageError("jpeg quality must lie in [1, 95]")
    w, h = img.size
    small = img.resize((max(1, w // downscale), max(1, h // downscale)), Image.BILINEAR)
    buf = io.BytesIO()
    small.save(buf, format="JPEG", quality=jpeg_quality)
    buf.seek(0)
    with Image.open(buf) as recoded:
        out = recoded.convert("RGB").resize((w, h), Image.BILINEAR)
    return out


def to_unit_range(img: Image.Image) -> np.ndarray:
    """(H, W, 3) float32 scaled and shifted into [-1, 1]."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected an RGB frame, got array shape {arr.shape}")
    if arr.shape[0] != FRAME_HEIGHT or arr.shape[1] != FRAME_WIDTH:
        raise ShapeError(f"expected {FRAME_HEIGHT}x{FRAME_WIDTH} pixels, got {arr.shape[:2]}")
    return arr / 127.5 - 1.0
