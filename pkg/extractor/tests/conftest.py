import numpy as np
import pytest
from PIL import Image


def write_tracklet(root, name, n, hue, size=(64, 128)):
    """Synthesize n ordered PNG frames with a per-identity tint."""
    folder = root / name
    folder.mkdir(parents=True)
    w, h = size
    ramp = np.linspace(0, 255, h, dtype=np.uint8)[:, None]
    for i in range(n):
        arr = np.zeros((h, w, 3), dtype=np.uint8)
        arr[:, :, 0] = (hue * 40) % 256
        arr[:, :, 1] = ramp
        arr[:, :, 2] = (i * 9) % 256
        Image.fromarray(arr).save(folder / f"{i:04d}.png")
    return folder


@pytest.fixture
def make_tracklet():
    return write_tracklet


@pytest.fixture
def frame_root(tmp_path):
    root = tmp_path / "frames"
    write_tracklet(root, "0001_c1", 32, 1)
    write_tracklet(root, "0001_c2", 16, 2)
    write_tracklet(root, "0002_c1", 9, 3)
    write_tracklet(root, "0002_c2", 3, 4)  # shorter than one clip
    return root
