"""Regenerate goldens/sampling_goldens.json from the sampling module.

The file pins the deterministic index formulas (clip placement and the
non-random frame selections) so an external feature extractor can verify
it computes identical indices. Run from the repository root:

    python3 scripts/make_sampling_goldens.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from clipsim.sampling import sample_clip_starts, sample_frame_indices  # noqa: E402

CLIP_START_CASES = [
    (32, 8, 4),
    (16, 8, 4),
    (12, 8, 4),
    (8, 8, 4),
    (4, 1, 4),
    (40, 1, 8),
    (100, 8, 4),
    (33, 8, 4),
    (9, 3, 3),
    (7, 2, 4),
    (64, 16, 4),
    (5, 4, 2),
]

FRAME_INDEX_CASES = [
    (10, 4, "evenly"),
    (4, 4, "evenly"),
    (3, 4, "evenly"),
    (100, 8, "evenly"),
    (5, 1, "evenly"),
    (1, 3, "evenly"),
    (17, 6, "evenly"),
    (2, 4, "consec"),
    (3, 7, "consec"),
    (6, 4, "all"),
    (1, 1, "all"),
]


def main():
    doc = {"clip_starts": [], "frame_indices": []}
    for n, m, l in CLIP_START_CASES:
        doc["clip_starts"].append({
            "num_frames": n,
            "num_clips": m,
            "clip_length": l,
            "starts": sample_clip_starts(n, m, l),
        })
    for n, length, method in FRAME_INDEX_CASES:
        # only methods whose output is independent of the rng belong here
        sample = sample_frame_indices(n, length, method, rng=None)
        doc["frame_indices"].append({
            "num_frames": n,
            "clip_length": length,
            "method": method,
            "indices": list(sample.indices),
            "with_replacement": sample.with_replacement,
        })
    out = Path(__file__).resolve().parents[1] / "goldens" / "sampling_goldens.json"
    out.parent.mkdir(exist_ok=True)
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
