"""Frame and clip index formulas.

These must produce exactly the indices the consumer's sampling module
produces; goldens/sampling_goldens.json in the repository root pins the
contract and the tests replay every case.
"""

import numpy as np

from .errors import UsageError

FRAME_METHODS = ("consec", "random", "evenly", "all")


def round_half_up_ratio(num: int, den: int) -> int:
    """round(num/den) with .5 going up, exact in integer arithmetic."""
    return (2 * num + den) // (2 * den)


def cyclic_pad_indices(n: int, target: int) -> list:
    """Extend a length-n index range to `target` by wrapping around."""
    if n < 1 or target < 1:
        raise UsageError("lengths must be >= 1")
    return [i % n for i in range(target)]


def clip_starts(n: int, num_clips: int, clip_length: int) -> list:
    """Evenly spread clip start positions over [0, n - clip_length]."""
    if num_clips < 1 or clip_length < 1:
        raise UsageError("num_clips and clip_length must be >= 1")
    if n < clip_length:
        raise UsageError(f"sequence of {n} frames cannot hold a clip of length {clip_length}")
    span = n - clip_length
    if num_clips == 1:
        return [span // 2]
    return [round_half_up_ratio(j * span, num_clips - 1) for j in range(num_clips)]


def frame_indices(n: int, length: int, method: str, rng: np.random.Generator | None):
    """Pick `length` frame indices from n frames; returns (indices, padded)."""
    if n < 1:
        raise UsageError("sequence length must be >= 1")
    if method not in FRAME_METHODS:
        raise UsageError(f"unknown frame method {method!r}")
    if method == "all":
        return list(range(n)), False
    if length < 1:
        raise UsageError("clip length must be >= 1")

    if method == "consec":
        if n >= length:
            start = int(rng.integers(0, n - length + 1))
            return list(range(start, start + length)), False
        return cyclic_pad_indices(n, length), True

    if method == "random":
        replace = n < length
        picked = np.sort(rng.choice(n, size=length, replace=replace))
        return [int(i) for i in picked], replace

    if length == 1:
        return [0], False
    if n >= length:
        return [round_half_up_ratio(k * (n - 1), length - 1) for k in range(length)], False
    return cyclic_pad_indices(n, length), True
