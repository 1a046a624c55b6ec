"""Recommendation-quality, coverage and exposure metrics.

Per-user computations are pure functions; aggregates fold over users in a
deterministic order. Conventions that the literature leaves open are
pinned here and documented on each function:

* nDCG of a user with empty ground truth is 0 (IDCG would be 0).
* Recall aggregation is macro (mean of per-user recall); users with empty
  ground truth are excluded from recall and counted separately, while
  hit rate and nDCG keep them as automatic misses.
* The Gini coefficient runs over items with at least one exposure, so a
  single item recommended to everyone has Gini 0 on its own support but
  a unique-top-1 count of 1.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .retrieval import CandidatePool


class MetricsError(ValueError):
    pass


@dataclass
class RankedList:
    """Final top-K output for one user: (item id, score), best first."""

    user_id: str
    entries: list[tuple[str, float]]
    k: int = 10

    def __post_init__(self):
        if len(self.entries) > self.k:
            raise MetricsError("ranked list longer than K")
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise MetricsError("duplicate items in ranked list")
        scores = [s for _, s in self.entries]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise MetricsError("ranked list scores must be non-increasing")

    @property
    def item_ids(self) -> list[str]:
        return [item_id for item_id, _ in self.entries]

    @property
    def top1_item(self) -> str | None:
        return self.entries[0][0] if self.entries else None


@dataclass
class PerUserResult:
    user_id: str
    hit: int
    ndcg: float
    recall_at: dict[int, float | None]
    top1_item: str | None
    rerank_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "hit": self.hit,
            "ndcg": self.ndcg,
            "recall": {str(k): v for k, v in sorted(self.recall_at.items())},
            "top1": self.top1_item,
            "rerank_seconds": self.rerank_seconds,
        }

    @classmethod
    def from_json_dict(cls, record: Mapping) -> "PerUserResult":
        return cls(
            user_id=record["user_id"],
            hit=int(record["hit"]),
            ndcg=float(record["ndcg"]),
            recall_at={int(k): (None if v is None else float(v)) for k, v in record["recall"].items()},
            top1_item=record["top1"],
            rerank_seconds=float(record["rerank_seconds"]),
        )


def _top_ids(ranked: RankedList | CandidatePool | Sequence[str], k: int) -> list[str]:
    if isinstance(ranked, (RankedList, CandidatePool)):
        return ranked.item_ids[:k]
    return list(ranked)[:k]


def hit_rate_at_k(lists: Mapping[str, RankedList] | Iterable[RankedList],
                  gt: Mapping[str, frozenset[str] | set[str]], k: int) -> float:
    """Fraction of users whose top-k contains at least one relevant item."""
    if not isinstance(lists, Mapping):
        lists = {rl.user_id: rl for rl in lists}
    if not lists:
        raise MetricsError("no ranked lists")
    hits = 0
    for user_id, ranked in lists.items():
        if user_id not in gt:
            raise MetricsError(f"no ground truth for user {user_id!r}")
        if set(_top_ids(ranked, k)) & set(gt[user_id]):
            hits += 1
    return hits / len(lists)


def ndcg_at_k(ranked: RankedList | Sequence[str], gt: frozenset[str] | set[str], k: int) -> float:
    """Binary-relevance nDCG@k.

    DCG@k = sum over positions i of (2^rel_i - 1) / log2(i + 1); the ideal
    list places min(|gt|, k) relevant items first. Returns 0 when the
    ground truth is empty.
    """
    if k < 1:
        raise MetricsError("k must be >= 1")
    gt = set(gt)
    ideal_hits = min(len(gt), k)
    if ideal_hits == 0:
        return 0.0
    dcg = 0.0
    for pos, item_id in enumerate(_top_ids(ranked, k), start=1):
        rel = 1 if item_id in gt else 0
        dcg += (2.0 ** rel - 1.0) / math.log2(pos + 1)
    idcg = sum(1.0 / math.log2(pos + 1) for pos in range(1, ideal_hits + 1))
    return dcg / idcg


def recall_at_k(pool: CandidatePool | RankedList | Sequence[str],
                gt: frozenset[str] | set[str], k: int) -> float:
    """Fraction of a user's ground-truth items inside the top-k candidates."""
    gt = set(gt)
    if not gt:
        raise MetricsError("recall undefined for empty ground truth")
    return len(set(_top_ids(pool, k)) & gt) / len(gt)


def macro_recall(pools: Mapping[str, CandidatePool | RankedList],
                 gt: Mapping[str, frozenset[str] | set[str]], k: int) -> tuple[float, int]:
    """Mean per-user recall@k; returns (mean, number of excluded users).

    Users with empty ground truth are excluded from the mean and counted.
    """
    values = []
    excluded = 0
    for user_id, pool in pools.items():
        if user_id not in gt:
            raise MetricsError(f"no ground truth for user {user_id!r}")
        if not gt[user_id]:
            excluded += 1
            continue
        values.append(recall_at_k(pool, gt[user_id], k))
    if not values:
        raise MetricsError("all users have empty ground truth")
    return sum(values) / len(values), excluded


# ---------------------------------------------------------------------------
# exposure

def gini_coefficient(counts: Sequence[float]) -> float:
    """Gini over the given exposure counts: sum_i (2i - n - 1) x_i / (n sum x)
    with x ascending and i 1-based. 0 for equal counts, -> 1 for extreme
    concentration; invariant under uniform scaling.
    """
    if not counts:
        raise MetricsError("gini of an empty count list")
    if any(c < 0 for c in counts):
        raise MetricsError("negative exposure count")
    total = float(sum(counts))
    if total == 0:
        return 0.0
    x = sorted(counts)
    n = len(x)
    acc = sum((2 * i - n - 1) * v for i, v in enumerate(x, start=1))
    return acc / (n * total)


@dataclass
class ExposureReport:
    """Top-1 exposure concentration across users.

    ``top1_histogram`` counts rank-1 appearances per item over all users
    with a non-empty list (its values sum to that user count), the Gini
    runs over exposed items only, and the cumulative curve walks items in
    descending exposure order up to share 1.0.
    """

    unique_top1: int
    gini: float
    top1_histogram: dict[str, int]
    cumulative_curve: list[tuple[int, float]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "unique_top1": self.unique_top1,
            "gini": self.gini,
            "top1_histogram": dict(sorted(self.top1_histogram.items(), key=lambda kv: (-kv[1], kv[0]))),
            "cumulative_curve": [[r, s] for r, s in self.cumulative_curve],
        }


def exposure_report(lists: Mapping[str, RankedList] | Iterable[RankedList]) -> ExposureReport:
    if isinstance(lists, Mapping):
        lists = lists.values()
    return exposure_from_top1(ranked.top1_item for ranked in lists)


def exposure_from_top1(top1_items: Iterable[str | None]) -> ExposureReport:
    """Exposure report straight from rank-1 item ids (None entries are
    users with an empty list and are skipped)."""
    histogram: Counter[str] = Counter(i for i in top1_items if i is not None)
    if not histogram:
        raise MetricsError("no non-empty ranked lists")
    total = sum(histogram.values())
    descending = sorted(histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    curve = []
    running = 0
    for rank, (_, count) in enumerate(descending, start=1):
        running += count
        curve.append((rank, running / total))
    return ExposureReport(
        unique_top1=len(histogram),
        gini=gini_coefficient(list(histogram.values())),
        top1_histogram=dict(histogram),
        cumulative_curve=curve,
    )


# ---------------------------------------------------------------------------
# ground-truth position diagnostics

@dataclass
class GtPositionStats:
    """Where ground-truth items sit in each user's full catalog ordering."""

    median: float
    q1: float
    q3: float
    histogram_edges: list[float]
    histogram_counts: list[int]
    fraction_within: dict[int, float]
    n_positions: int

    def to_json_dict(self) -> dict:
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "histogram_edges": self.histogram_edges,
            "histogram_counts": self.histogram_counts,
            "fraction_within": {str(k): v for k, v in sorted(self.fraction_within.items())},
            "n_positions": self.n_positions,
        }


def gt_position_stats(rankings: Mapping[str, Sequence[str]],
                      gt: Mapping[str, frozenset[str] | set[str]],
                      cutoffs: Sequence[int] = (50, 200, 1000),
                      bins: int = 20) -> GtPositionStats:
    """Summarize 1-based ground-truth positions in full per-user orderings.

    ``fraction_within[K]`` is the macro mean over users of the per-user
    fraction of ground-truth items at position <= K, which is exactly
    recall@K of the same ordering; the two code paths must agree.
    """
    positions: list[int] = []
    per_user_fracs: dict[int, list[float]] = {k: [] for k in cutoffs}
    for user_id, ordering in rankings.items():
        gt_items = set(gt.get(user_id, ()))
        if not gt_items:
            continue
        index = {item_id: pos for pos, item_id in enumerate(ordering, start=1)}
        user_positions = []
        for item_id in gt_items:
            if item_id not in index:
                raise MetricsError(f"ground-truth item {item_id!r} missing from "
                                   f"user {user_id!r}'s ordering")
            user_positions.append(index[item_id])
        positions.extend(user_positions)
        for k in cutoffs:
            per_user_fracs[k].append(sum(1 for p in user_positions if p <= k) / len(user_positions))
    if not positions:
        raise MetricsError("no ground-truth positions to summarize")
    arr = np.array(positions, dtype=np.float64)
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    counts, edges = np.histogram(arr, bins=bins, range=(1, max(arr.max(), 1)))
    return GtPositionStats(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
        fraction_within={int(k): sum(v) / len(v) for k, v in per_user_fracs.items()},
        n_positions=len(positions),
    )
