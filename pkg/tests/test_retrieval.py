import math

import numpy as np
import pytest

from coldrank import rng
from coldrank.catalog import Catalog, Item
from coldrank.retrieval import (Bm25Index, Bm25Params, CandidatePool,
                                DimensionMismatchError, EmbeddingSet,
                                EmptyIndexError, RetrievalError, bm25_search,
                                flat_search, hybrid_union, popularity_topk,
                                random_topk)


def _catalog_from_texts(texts: dict[str, str], popularity: dict[str, int] | None = None) -> Catalog:
    popularity = popularity or {}
    return Catalog([Item(id=i, title=t, popularity=popularity.get(i, 0))
                    for i, t in texts.items()])


# ---------------------------------------------------------------------------
# embeddings + flat search

def test_embedding_set_renormalizes_and_reports_drift():
    emb = EmbeddingSet(["a", "b"], np.array([[3.0, 4.0], [0.5, 0.0]]))
    assert emb.max_norm_drift == pytest.approx(4.0)  # ||(3,4)|| = 5
    assert np.allclose(np.linalg.norm(emb.matrix, axis=1), 1.0, atol=1e-12)


def test_embedding_file_round_trip(tmp_path):
    gen = rng.generator(1, "emb")
    emb = EmbeddingSet([f"i{k}" for k in range(7)], gen.standard_normal((7, 5)))
    path = tmp_path / "emb.txt"
    emb.save(path)
    again = EmbeddingSet.load(path)
    assert again.ids == emb.ids
    assert again.dim == 5
    assert np.allclose(again.matrix, emb.matrix, atol=1e-12)


def test_embedding_file_errors(tmp_path):
    bad_header = tmp_path / "a.txt"
    bad_header.write_text("vectors=3\n", encoding="utf-8")
    with pytest.raises(RetrievalError):
        EmbeddingSet.load(bad_header)
    bad_row = tmp_path / "b.txt"
    bad_row.write_text("dim=3\nx\t1.0 2.0\n", encoding="utf-8")
    with pytest.raises(DimensionMismatchError):
        EmbeddingSet.load(bad_row)


def test_flat_search_self_similarity():
    gen = rng.generator(2, "emb")
    emb = EmbeddingSet([f"i{k}" for k in range(20)], gen.standard_normal((20, 8)))
    pool = flat_search(emb.vector("i7"), emb, k=1)
    assert pool.entries[0][0] == "i7"
    assert pool.entries[0][1] == pytest.approx(1.0, abs=1e-6)


def test_flat_search_orthogonal_pair():
    emb = EmbeddingSet(["e1", "e2"], np.array([[1.0, 0.0], [0.0, 1.0]]))
    pool = flat_search(np.array([1.0, 0.0]), emb, k=2)
    assert pool.entries == [("e1", pytest.approx(1.0)), ("e2", pytest.approx(0.0))]


def test_flat_search_matches_full_sort_oracle():
    for trial in range(110):
        gen = rng.generator(3, "oracle", trial)
        n, d = int(gen.integers(5, 100)), int(gen.integers(2, 16))
        emb = EmbeddingSet([f"i{k:03d}" for k in range(n)], gen.standard_normal((n, d)))
        query = gen.standard_normal(d)
        k = int(gen.integers(1, n + 1))
        pool = flat_search(query, emb, k)
        q = query / np.linalg.norm(query)
        sims = {emb.ids[i]: float(np.dot(emb.matrix[i], q)) for i in range(n)}
        expected = sorted(sims.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        assert pool.item_ids == [item_id for item_id, _ in expected]
        for (got_id, got_score), (_, want_score) in zip(pool.entries, expected):
            assert got_score == pytest.approx(want_score, abs=1e-12), got_id


def test_flat_search_breaks_ties_by_id():
    vec = np.array([[1.0, 0.0]])
    emb = EmbeddingSet(["z", "a", "m"], np.repeat(vec, 3, axis=0))
    pool = flat_search(np.array([1.0, 0.0]), emb, k=3)
    assert pool.item_ids == ["a", "m", "z"]


def test_flat_search_dimension_mismatch():
    emb = EmbeddingSet(["a"], np.array([[1.0, 0.0]]))
    with pytest.raises(DimensionMismatchError):
        flat_search(np.array([1.0, 0.0, 0.0]), emb, k=1)


# ---------------------------------------------------------------------------
# bm25

def test_bm25_single_document_match():
    catalog = _catalog_from_texts({"d1": "red fish"})
    index = Bm25Index(catalog)
    pool = index.search("fish", k=5)
    assert pool.item_ids == ["d1"]
    assert pool.entries[0][1] > 0


def test_bm25_hand_computed_scores():
    catalog = _catalog_from_texts({
        "a": "red fish",
        "b": "red red blue",
        "c": "green fish blue fish",
    })
    k1, b = 1.2, 0.75
    index = Bm25Index(catalog, Bm25Params(k1=k1, b=b))
    pool = index.search("red fish", k=3)
    # hand-applied Okapi formula: N=3, avgdl=3, df(red)=df(fish)=2
    idf = math.log((3 - 2 + 0.5) / (2 + 0.5) + 1.0)

    def term(tf, dl):
        return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / 3.0))

    expected = {
        "a": term(1, 2) + term(1, 2),
        "b": term(2, 3),
        "c": term(2, 4),
    }
    got = dict(pool.entries)
    assert set(got) == set(expected)
    for doc, score in expected.items():
        assert got[doc] == pytest.approx(score, abs=1e-9)
    order = sorted(expected.items(), key=lambda kv: (-kv[1], kv[0]))
    assert pool.item_ids == [doc for doc, _ in order]


def test_bm25_no_shared_terms_gives_empty_pool():
    catalog = _catalog_from_texts({"a": "red fish", "b": "blue whale"})
    pool = Bm25Index(catalog).search("quantum chromodynamics", k=5)
    assert pool.entries == []


def test_bm25_empty_catalog_raises():
    with pytest.raises(EmptyIndexError):
        Bm25Index(Catalog([]))


def test_bm25_ties_break_by_id():
    catalog = _catalog_from_texts({"b": "same text", "a": "same text"})
    pool = bm25_search("same", Bm25Index(catalog), k=2)
    assert pool.item_ids == ["a", "b"]


def test_bm25_params_validation():
    with pytest.raises(RetrievalError):
        Bm25Params(k1=0.0)
    with pytest.raises(RetrievalError):
        Bm25Params(b=1.5)


# ---------------------------------------------------------------------------
# popularity / random

def test_popularity_topk_orders_by_count():
    catalog = _catalog_from_texts({"a": "", "b": "", "c": ""}, {"a": 5, "b": 9, "c": 1})
    assert popularity_topk(catalog, 2).item_ids == ["b", "a"]


def test_popularity_equal_counts_tie_by_id():
    catalog = _catalog_from_texts({"c": "", "a": "", "b": ""}, {"a": 3, "b": 3, "c": 3})
    assert popularity_topk(catalog, 3).item_ids == ["a", "b", "c"]


def test_random_topk_full_catalog_is_permutation():
    catalog = _catalog_from_texts({f"i{k}": "" for k in range(12)})
    pool = random_topk(catalog, 12, seed=9)
    assert sorted(pool.item_ids) == sorted(catalog.item_ids)


def test_random_topk_deterministic_per_seed():
    catalog = _catalog_from_texts({f"i{k}": "" for k in range(30)})
    assert random_topk(catalog, 5, seed=4).entries == random_topk(catalog, 5, seed=4).entries
    assert random_topk(catalog, 5, seed=4).item_ids != random_topk(catalog, 5, seed=5).item_ids


def test_random_topk_k_too_large():
    catalog = _catalog_from_texts({"a": ""})
    with pytest.raises(RetrievalError):
        random_topk(catalog, 2, seed=1)


def test_random_topk_draws_are_uniform():
    catalog = _catalog_from_texts({f"i{k}": "" for k in range(10)})
    draws = 100_000
    counts = {i: 0 for i in catalog.item_ids}
    for trial in range(draws):
        counts[random_topk(catalog, 1, seed=trial).item_ids[0]] += 1
    expected = draws / 10
    tolerance = 3 * math.sqrt(draws * 0.1 * 0.9)
    for item_id, count in counts.items():
        assert abs(count - expected) <= tolerance, (item_id, count)


# ---------------------------------------------------------------------------
# hybrid union

def test_hybrid_union_of_pool_with_itself_is_identity():
    pool = CandidatePool("u", [("a", 3.0), ("b", 2.0), ("c", 1.0)], 3)
    union = hybrid_union([pool, pool], k_total=3)
    assert union.item_ids == pool.item_ids


def test_hybrid_union_disjoint_pools_keeps_everything():
    a = CandidatePool("u", [("a1", 3.0), ("a2", 2.0), ("a3", 1.0)], 3)
    b = CandidatePool("u", [("b1", 9.0), ("b2", 8.0), ("b3", 7.0), ("b4", 6.0)], 4)
    union = hybrid_union([a, b], k_total=7)
    assert sorted(union.item_ids) == sorted(a.item_ids + b.item_ids)


def test_hybrid_union_is_superset_when_k_total_covers_inputs():
    for trial in range(20):
        gen = rng.generator(11, "union", trial)
        ids = [f"i{k:02d}" for k in range(30)]
        a_ids = list(gen.choice(ids, size=8, replace=False))
        b_ids = list(gen.choice(ids, size=12, replace=False))
        a = CandidatePool("u", [(i, float(s)) for i, s in zip(a_ids, -np.sort(-gen.random(8)))], 8)
        b = CandidatePool("u", [(i, float(s)) for i, s in zip(b_ids, -np.sort(-gen.random(12)))], 12)
        union = hybrid_union([a, b], k_total=20)
        assert set(a.item_ids) | set(b.item_ids) == set(union.item_ids)


def test_hybrid_union_rejects_mixed_users_and_empty_input():
    a = CandidatePool("u1", [("a", 1.0)], 1)
    b = CandidatePool("u2", [("b", 1.0)], 1)
    with pytest.raises(RetrievalError):
        hybrid_union([a, b], 2)
    with pytest.raises(RetrievalError):
        hybrid_union([], 2)


# ---------------------------------------------------------------------------
# pool invariants

def test_pool_rejects_duplicates_and_increasing_scores():
    with pytest.raises(RetrievalError):
        CandidatePool("u", [("a", 1.0), ("a", 0.5)], 2)
    with pytest.raises(RetrievalError):
        CandidatePool("u", [("a", 0.5), ("b", 1.0)], 2)
    with pytest.raises(RetrievalError):
        CandidatePool("u", [("a", 1.0), ("b", 0.5)], 1)


def test_retrievers_are_pure_functions(small_world):
    emb = small_world.embeddings
    query = small_world.query_vector(small_world.users[0].id)
    first = flat_search(query, emb, 25)
    second = flat_search(query, emb, 25)
    assert first.entries == second.entries
    index = Bm25Index(small_world.catalog)
    text = small_world.users[0].profile_text
    assert index.search(text, 25).entries == index.search(text, 25).entries
