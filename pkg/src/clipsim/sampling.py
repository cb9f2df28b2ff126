"""Index-level sampling: frame selection, clip placement, PK batches.

Everything here works on integer index lists, never on pixels or features,
so the logic is testable without any video data. All randomness comes from
a caller-supplied numpy Generator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidArgumentError, SequenceTooShortError

FRAME_METHODS = ("consec", "random", "evenly", "all")


@dataclass(frozen=True)
class ClipSpec:
    """How clips are cut from a frame sequence."""

    clip_length: int = 4
    num_clips: int = 8
    method: str = "evenly"

    def __post_init__(self):
        if self.clip_length < 1 or self.num_clips < 1:
            raise InvalidArgumentError("clip_length and num_clips must be >= 1")
        if self.method not in FRAME_METHODS:
            raise InvalidArgumentError(f"unknown frame method {self.method!r}")


@dataclass(frozen=True)
class FrameSample:
    """Selected frame indices; with_replacement marks repeated frames."""

    indices: tuple
    with_replacement: bool = False


@dataclass
class PKBatch:
    tracklets: list
    labels: np.ndarray  # person_id per entry
    num_identities: int
    per_identity: int


def _round_half_up_ratio(num: int, den: int) -> int:
    """round(num/den) with .5 going up, exact in integer arithmetic."""
    return (2 * num + den) // (2 * den)


def cyclic_pad_indices(n: int, target: int) -> list:
    """Extend a length-n index range to `target` by wrapping around."""
    if n < 1 or target < 1:
        raise InvalidArgumentError("lengths must be >= 1")
    return [i % n for i in range(target)]


def sample_frame_indices(n: int, length: int, method: str, rng: np.random.Generator) -> FrameSample:
    """Pick `length` frame indices from a sequence of n frames.

    consec: contiguous run with a uniformly random start.
    random: drawn without replacement, returned in ascending order.
    evenly: deterministic spread including both endpoints.
    all:    every index, ignoring `length`.

    Sequences shorter than `length` are handled by cyclic repetition
    (consec, evenly) or a flagged fall-back to replacement (random).
    """
    if n < 1:
        raise InvalidArgumentError("sequence length must be >= 1")
    if method not in FRAME_METHODS:
        raise InvalidArgumentError(f"unknown frame method {method!r}")
    if method == "all":
        return FrameSample(indices=tuple(range(n)))
    if length < 1:
        raise InvalidArgumentError("clip length must be >= 1")

    if method == "consec":
        if n >= length:
            start = int(rng.integers(0, n - length + 1))
            return FrameSample(indices=tuple(range(start, start + length)))
        return FrameSample(indices=tuple(cyclic_pad_indices(n, length)), with_replacement=True)

    if method == "random":
        if n >= length:
            picked = np.sort(rng.choice(n, size=length, replace=False))
            return FrameSample(indices=tuple(int(i) for i in picked))
        picked = np.sort(rng.choice(n, size=length, replace=True))
        return FrameSample(indices=tuple(int(i) for i in picked), with_replacement=True)

    # evenly
    if length == 1:
        return FrameSample(indices=(0,))
    if n >= length:
        idx = tuple(_round_half_up_ratio(k * (n - 1), length - 1) for k in range(length))
        return FrameSample(indices=idx)
    return FrameSample(indices=tuple(cyclic_pad_indices(n, length)), with_replacement=True)


def sample_clip_starts(n: int, num_clips: int, clip_length: int) -> list:
    """Spread `num_clips` clip start positions evenly over [0, n - clip_length].

    Overlap is permitted; when the range divides exactly the clips are
    disjoint. A single clip is centered.
    """
    if num_clips < 1 or clip_length < 1:
        raise InvalidArgumentError("num_clips and clip_length must be >= 1")
    if n < clip_length:
        raise SequenceTooShortError(
            f"sequence of {n} frames cannot hold a clip of length {clip_length}; pad first"
        )
    span = n - clip_length
    if num_clips == 1:
        return [span // 2]
    return [_round_half_up_ratio(j * span, num_clips - 1) for j in range(num_clips)]


def sample_pk_batch(tracklets: list, p: int, k: int, rng: np.random.Generator) -> PKBatch:
    """Identity-balanced batch: p identities, k tracklets each.

    Identities are drawn without replacement; tracklets within an identity
    are drawn without replacement when it has at least k, otherwise with
    replacement so every identity still contributes exactly k entries.
    """
    if p < 1 or k < 1:
        raise InvalidArgumentError("p and k must be >= 1")
    by_id = {}
    for t in tracklets:
        by_id.setdefault(t.person_id, []).append(t)
    ids = sorted(by_id)
    if len(ids) < p:
        raise ConfigError(f"need {p} identities, train split has {len(ids)}")

    chosen_ids = rng.choice(len(ids), size=p, replace=False)
    batch, labels = [], []
    for ii in chosen_ids:
        pid = ids[int(ii)]
        pool = by_id[pid]
        replace = len(pool) < k
        picks = rng.choice(len(pool), size=k, replace=replace)
        for j in picks:
            batch.append(pool[int(j)])
            labels.append(pid)
    return PKBatch(
        tracklets=batch,
        labels=np.asarray(labels, dtype=np.int64),
        num_identities=p,
        per_identity=k,
    )
