"""Candidate generation: exact cosine search, Okapi BM25, popularity,
random sampling, and the hybrid union of several retrievers.

All retrievers are pure functions of their inputs (plus an explicit seed
for the random one) and break score ties by ascending item id, so results
are reproducible across platforms and schedulers. Indexes are built once
and never mutated; searches are read-only and parallelize freely.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .catalog import Catalog, build_item_profile


class RetrievalError(ValueError):
    pass


class DimensionMismatchError(RetrievalError):
    pass


class EmptyIndexError(RetrievalError):
    pass


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not self.k1 > 0:
            raise RetrievalError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise RetrievalError("b must be in [0, 1]")


@dataclass
class CandidatePool:
    """Ordered retrieval output for one user: (item id, score) pairs with
    non-increasing scores and no duplicates."""

    user_id: str
    entries: list[tuple[str, float]]
    pool_size: int

    def __post_init__(self):
        if len(self.entries) > self.pool_size:
            raise RetrievalError("pool has more entries than pool_size")
        seen: set[str] = set()
        prev = math.inf
        for item_id, score in self.entries:
            if item_id in seen:
                raise RetrievalError(f"duplicate item in pool: {item_id!r}")
            seen.add(item_id)
            if score > prev:
                raise RetrievalError("pool scores must be non-increasing")
            prev = score

    @property
    def item_ids(self) -> list[str]:
        return [item_id for item_id, _ in self.entries]

    def truncated(self, k: int) -> "CandidatePool":
        return CandidatePool(self.user_id, self.entries[:k], k)


class EmbeddingSet:
    """Dense, id-indexed vectors, L2-normalized at load time."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise RetrievalError("matrix must be (len(ids), dim)")
        if len(set(ids)) != len(ids):
            raise RetrievalError("duplicate ids in embedding set")
        norms = np.linalg.norm(matrix, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        self.ids: list[str] = [str(i) for i in ids]
        self.matrix: np.ndarray = matrix / safe[:, None]
        # how far the input was from unit norm, before renormalization
        self.max_norm_drift: float = float(np.max(np.abs(norms - 1.0))) if len(norms) else 0.0
        self._row: dict[str, int] = {i: r for r, i in enumerate(self.ids)}
        self._ids_array = np.array(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._row

    def vector(self, item_id: str) -> np.ndarray:
        try:
            return self.matrix[self._row[item_id]]
        except KeyError:
            raise RetrievalError(f"no vector for id {item_id!r}") from None

    def covers(self, ids: Iterable[str]) -> bool:
        return all(i in self._row for i in ids)

    # text interchange format: first line "dim=<d>", then "<id>\t<v1> <v2> ...".
    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingSet":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("dim="):
                raise RetrievalError(f"{path}: expected 'dim=<d>' header, got {header!r}")
            dim = int(header[4:])
            ids: list[str] = []
            rows: list[np.ndarray] = []
            for line_no, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                item_id, sep, values = line.rstrip("\n").partition("\t")
                if not sep:
                    raise RetrievalError(f"{path}:{line_no}: missing tab separator")
                vec = np.array(values.split(), dtype=np.float64)
                if vec.shape[0] != dim:
                    raise DimensionMismatchError(
                        f"{path}:{line_no}: expected {dim} values, got {vec.shape[0]}")
                ids.append(item_id)
                rows.append(vec)
        if not rows:
            raise RetrievalError(f"{path}: no vectors")
        return cls(ids, np.vstack(rows))

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"dim={self.dim}\n")
            for item_id, row in zip(self.ids, self.matrix):
                fh.write(item_id + "\t" + " ".join(repr(float(v)) for v in row) + "\n")


def flat_search(query: np.ndarray, embeddings: EmbeddingSet, k: int, user_id: str = "") -> CandidatePool:
    """Exact top-k by inner product over the full set (no approximation).

    The query is normalized first, so scores are cosines; ties break by
    ascending item id.
    """
    query = np.asarray(query, dtype=np.float64).ravel()
    if query.shape[0] != embeddings.dim:
        raise DimensionMismatchError(
            f"query dim {query.shape[0]} != embedding dim {embeddings.dim}")
    if k < 1:
        raise RetrievalError("k must be >= 1")
    norm = np.linalg.norm(query)
    if norm > 0:
        query = query / norm
    sims = embeddings.matrix @ query
    order = np.lexsort((embeddings._ids_array, -sims))[:k]
    entries = [(embeddings.ids[i], float(sims[i])) for i in order]
    return CandidatePool(user_id, entries, k)


class Bm25Index:
    """Inverted index over item profile texts with Okapi BM25 scoring.

    Tokenization is lowercase whitespace splitting. IDF uses the
    ln((N - df + 0.5)/(df + 0.5) + 1) form, which is strictly positive,
    so only items sharing at least one query term can enter results.
    """

    def __init__(self, catalog: Catalog, params: Bm25Params | None = None, max_tags: int = 10):
        self.params = params or Bm25Params()
        self.ids: list[str] = []
        self.doc_len: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for item in catalog:
            tokens = build_item_profile(item, max_tags).lower().split()
            doc = len(self.ids)
            self.ids.append(item.id)
            self.doc_len.append(len(tokens))
            for term, tf in Counter(tokens).items():
                self.postings.setdefault(term, []).append((doc, tf))
        if not self.ids:
            raise EmptyIndexError("cannot build a BM25 index over an empty catalog")
        self.n_docs = len(self.ids)
        self.avgdl = sum(self.doc_len) / self.n_docs if any(self.doc_len) else 1.0
        self.idf = {
            term: math.log((self.n_docs - len(plist) + 0.5) / (len(plist) + 0.5) + 1.0)
            for term, plist in self.postings.items()
        }

    def search(self, query_text: str, k: int, user_id: str = "") -> CandidatePool:
        if k < 1:
            raise RetrievalError("k must be >= 1")
        k1, b = self.params.k1, self.params.b
        scores: dict[int, float] = {}
        # sum over query tokens as-is; repeated terms contribute repeatedly
        for term in query_text.lower().split():
            plist = self.postings.get(term)
            if plist is None:
                continue
            idf = self.idf[term]
            for doc, tf in plist:
                denom = tf + k1 * (1.0 - b + b * self.doc_len[doc] / self.avgdl)
                scores[doc] = scores.get(doc, 0.0) + idf * tf * (k1 + 1.0) / denom
        ranked = sorted(scores.items(), key=lambda ds: (-ds[1], self.ids[ds[0]]))[:k]
        return CandidatePool(user_id, [(self.ids[d], s) for d, s in ranked], k)


def bm25_search(query_text: str, index: Bm25Index, k: int, user_id: str = "") -> CandidatePool:
    return index.search(query_text, k, user_id)


def popularity_topk(catalog: Catalog, k: int, user_id: str = "") -> CandidatePool:
    """Global popularity ranking; identical for every user."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    ranked = sorted(catalog, key=lambda it: (-it.popularity, it.id))[:k]
    return CandidatePool(user_id, [(it.id, float(it.popularity)) for it in ranked], k)


def random_topk(catalog: Catalog, k: int, seed: int, user_id: str = "") -> CandidatePool:
    """Uniform sample without replacement, deterministic per seed.

    Callers wanting per-user draws derive a sub-seed per user ordinal
    (see harness). Scores are the descending sampling sequence positions.
    """
    if k < 1:
        raise RetrievalError("k must be >= 1")
    if k > catalog.size:
        raise RetrievalError(f"k={k} exceeds catalog size {catalog.size}")
    gen = rng.generator(seed, "random-topk")
    ids = sorted(catalog.item_ids)
    picks = gen.choice(len(ids), size=k, replace=False)
    entries = [(ids[int(p)], float(k - rank)) for rank, p in enumerate(picks)]
    return CandidatePool(user_id, entries, k)


def _minmax(scores: list[float]) -> list[float]:
    lo, hi = min(scores), max(scores)
    if hi > lo:
        return [(s - lo) / (hi - lo) for s in scores]
    return [1.0] * len(scores)


def hybrid_union(pools: Sequence[CandidatePool], k_total: int) -> CandidatePool:
    """Deduplicated union of candidate pools for one user.

    Each pool's scores are min-max normalized over its own entries and an
    item's merged score is the max across pools, which is scale-free and
    preserves within-pool order. The union is a superset of every input
    whenever k_total covers the combined size, so recall can only go up.
    """
    if not pools:
        raise RetrievalError("hybrid_union needs at least one pool")
    user_ids = {p.user_id for p in pools}
    if len(user_ids) > 1:
        raise RetrievalError(f"pools belong to different users: {sorted(user_ids)}")
    if k_total < 1:
        raise RetrievalError("k_total must be >= 1")
    merged: dict[str, float] = {}
    for pool in pools:
        if not pool.entries:
            continue
        normed = _minmax([s for _, s in pool.entries])
        for (item_id, _), score in zip(pool.entries, normed):
            if item_id not in merged or score > merged[item_id]:
                merged[item_id] = score
    ranked = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:k_total]
    return CandidatePool(pools[0].user_id, ranked, k_total)
