"""Retrieval metrics: CMC at selected ranks and mean average precision.

Ranking is by descending similarity with ties broken by ascending gallery
index. Cross-camera exclusion drops gallery entries that share both the
person and the camera with the query, the usual retrieval protocol when a
dataset has multiple views.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class RankingResult:
    """Per-query ranked gallery with match flags, exclusions removed."""

    order: np.ndarray  # gallery indices, best first
    matches: np.ndarray  # bool per position: same person as the query


@dataclass
class EvaluationReport:
    mean_ap: float
    cmc: dict
    query_count: int
    skipped_queries: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mAP": self.mean_ap,
            "cmc": {str(k): v for k, v in self.cmc.items()},
            "query_count": self.query_count,
            "skipped_queries": self.skipped_queries,
            "config": self.config,
        }


def rank_gallery(sim_row, exclude_mask=None) -> np.ndarray:
    """Order gallery indices by descending similarity, ties by index."""
    row = np.asarray(sim_row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise InvalidArgumentError("similarity row must be a non-empty vector")
    keep = np.ones(row.size, dtype=bool) if exclude_mask is None else ~np.asarray(exclude_mask)
    idx = np.where(keep)[0]
    if idx.size == 0:
        raise InvalidArgumentError("every gallery entry is excluded for this query")
    # stable sort on negated scores keeps ascending index among ties
    order = idx[np.argsort(-row[idx], kind="stable")]
    return order


def cmc(results, ranks) -> dict:
    """Fraction of queries whose first true match ranks at or above r."""
    if any(r <= 0 for r in ranks):
        raise InvalidArgumentError("ranks must be positive")
    if not results:
        raise InvalidArgumentError("no queries to score")
    firsts = []
    for res in results:
        hit = np.where(res.matches)[0]
        if hit.size == 0:
            raise InvalidArgumentError("cmc needs every counted query to have a match")
        firsts.append(hit[0] + 1)  # 1-indexed position
    firsts = np.asarray(firsts)
    return {int(r): float(np.mean(firsts <= r)) for r in ranks}


def average_precision(matches) -> float:
    """Non-interpolated AP over one ranked boolean relevance list."""
    matches = np.asarray(matches, dtype=bool)
    n_rel = int(matches.sum())
    if n_rel == 0:
        raise InvalidArgumentError("average precision undefined with no relevant entries")
    positions = np.where(matches)[0] + 1
    hits = np.arange(1, n_rel + 1)
    return float(np.mean(hits / positions))


def mean_ap(results) -> float:
    if not results:
        raise InvalidArgumentError("no queries to score")
    return float(np.mean([average_precision(r.matches) for r in results]))


def evaluate(
    sim_matrix,
    query_pids,
    query_cams,
    gallery_pids,
    gallery_cams,
    ranks=(1, 5, 20),
    exclude_same_camera=True,
    config=None,
) -> EvaluationReport:
    """Full retrieval evaluation of a query x gallery similarity matrix.

    Queries whose true matches are all excluded (or absent) are skipped and
    counted in the report rather than failing the run.
    """
    sims = np.asarray(sim_matrix, dtype=np.float64)
    query_pids = np.asarray(query_pids)
    gallery_pids = np.asarray(gallery_pids)
    query_cams = np.asarray(query_cams)
    gallery_cams = np.asarray(gallery_cams)
    if sims.ndim != 2 or sims.shape != (query_pids.size, gallery_pids.size):
        raise InvalidArgumentError("similarity matrix shape must be (num queries, num gallery)")
    if not np.all(np.isfinite(sims)):
        raise InvalidArgumentError("non-finite similarities")

    results = []
    skipped = 0
    for i in range(query_pids.size):
        exclude = None
        if exclude_same_camera:
            exclude = (gallery_pids == query_pids[i]) & (gallery_cams == query_cams[i])
            if exclude.all():
                skipped += 1
                warnings.warn(f"query {i}: every gallery entry excluded; skipping")
                continue
        order = rank_gallery(sims[i], exclude)
        matches = gallery_pids[order] == query_pids[i]
        if not matches.any():
            skipped += 1
            warnings.warn(f"query {i}: no true match in gallery; skipping")
            continue
        results.append(RankingResult(order=order, matches=matches))

    if not results:
        raise InvalidArgumentError("no scorable queries")
    return EvaluationReport(
        mean_ap=mean_ap(results),
        cmc=cmc(results, ranks),
        query_count=len(results),
        skipped_queries=skipped,
        config=config or {},
    )
