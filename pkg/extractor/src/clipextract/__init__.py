"""Bridge from tracklet frame folders to CSF1 clip-feature stores.

This package is deliberately independent of the consumer library: it shares
only the on-disk CSF1 format and the index formulas pinned by the committed
sampling goldens.
"""

from .extract import ClipSpec, CorruptionSpec, ExtractJob, extract

__all__ = ["ClipSpec", "CorruptionSpec", "ExtractJob", "extract"]
