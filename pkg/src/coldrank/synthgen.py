"""Synthetic cold-start worlds with controllable failure modes.

A world bundles a catalog, users with ground truth, item/query embeddings
and a parametric reranker-style scorer. The knobs let tests reproduce the
pipeline pathologies this toolkit diagnoses without any real data or
models: Zipf popularity skew drives how much ground truth concentrates on
head items, ``alignment`` controls how much of the embedding signal comes
from the true-relevance latent space (0 = pure noise retrieval, 1 =
retrieval that can rank ground truth perfectly), and the scorer mixes a
true-relevance signal with per-item bias, profile-length bias and unit
gaussian noise.

Generation procedure (all streams keyed off ``seed`` via the package's
splitmix64/Philox derivation, so a fixed seed is bit-reproducible):

1. item latent vectors: uniform on the ``latent_dim`` unit sphere;
2. popularity counts: inverse-CDF Zipf(``zipf_exponent``) draws over
   ranks, assigned to a random permutation of items;
3. user latent preference vectors on the same sphere;
4. true relevance rel(u, i) = gt_popularity_mix * pop_score(i)
   + (1 - gt_popularity_mix) * <user_latent, item_latent>; each user's
   ground truth is the top ``gt_per_user`` items by rel, exact ties
   broken by a per-user seeded permutation;
5. retrieval embeddings: normalize(alignment * project(latent)
   + (1 - alignment) * unit noise), with project a fixed random
   orthonormal-column matrix (inner products preserved); user query
   vectors analogous;
6. scorer score(u, i) = scorer_signal * rel(u, i)
   + scorer_item_bias * bias(i) + scorer_length_bias * len_score(i)
   + unit gaussian noise, with bias a fixed per-item standard normal
   draw and len_score the item profile length over the catalog mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .catalog import Catalog, Item, UserRecord, build_item_profile, save_catalog, save_users
from .retrieval import EmbeddingSet

DEFAULT_SEEDS = (42, 7, 123)


class WorldSpecError(ValueError):
    pass


@dataclass
class WorldSpec:
    catalog_size: int
    user_count: int
    embed_dim: int = 384
    latent_dim: int = 16
    zipf_exponent: float = 1.0
    alignment: float = 1.0
    gt_per_user: int = 10
    gt_popularity_mix: float = 0.0
    scorer_signal: float = 1.0
    scorer_item_bias: float = 0.0
    scorer_length_bias: float = 0.0
    seed: int = 42
    # mean popularity draws per item; low values produce tie-heavy counts
    pop_draws_per_item: int = 20

    def __post_init__(self):
        for name in ("catalog_size", "user_count", "embed_dim", "latent_dim",
                     "gt_per_user", "pop_draws_per_item"):
            if int(getattr(self, name)) < 1:
                raise WorldSpecError(f"{name} must be >= 1")
        for name in ("alignment", "gt_popularity_mix"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise WorldSpecError(f"{name} must be in [0, 1]")
        if self.zipf_exponent < 0:
            raise WorldSpecError("zipf_exponent must be >= 0")
        for name in ("scorer_signal", "scorer_item_bias", "scorer_length_bias"):
            if getattr(self, name) < 0:
                raise WorldSpecError(f"{name} must be >= 0")
        if self.latent_dim > self.embed_dim:
            raise WorldSpecError("latent_dim must not exceed embed_dim")
        if self.gt_per_user > self.catalog_size:
            raise WorldSpecError("gt_per_user must not exceed catalog_size")

    def to_json_dict(self) -> dict:
        return {
            "catalog_size": self.catalog_size,
            "user_count": self.user_count,
            "embed_dim": self.embed_dim,
            "latent_dim": self.latent_dim,
            "zipf_exponent": self.zipf_exponent,
            "alignment": self.alignment,
            "gt_per_user": self.gt_per_user,
            "gt_popularity_mix": self.gt_popularity_mix,
            "scorer_signal": self.scorer_signal,
            "scorer_item_bias": self.scorer_item_bias,
            "scorer_length_bias": self.scorer_length_bias,
            "seed": self.seed,
            "pop_draws_per_item": self.pop_draws_per_item,
        }


_TITLE_WORDS = (
    "crimson silent broken hidden velvet iron golden lonely burning frozen "
    "midnight paper glass hollow savage quiet electric wild ancient neon "
    "harbor garden empire shadow river canyon winter signal museum orchid"
).split()

_GENRES = (
    "action comedy drama horror scifi thriller romance documentary "
    "animation crime fantasy western"
).split()

_TAG_WORDS = (
    "space monster dystopia heist noir robots vampires roadtrip courtroom "
    "timetravel zombies pirates samurai chess boxing jazz desert arctic "
    "submarine espionage baking politics plague carnival lighthouse mining "
    "orchestra tundra steampunk folklore satire labyrinth monastery foundry "
    "glacier archive caravan pendulum reactor meridian catacomb zeppelin "
    "harvest mirage bazaar citadel relic obelisk gondola parliament quarry"
).split()

_PROFILE_FILLERS = (
    "enjoys prefers follows collects rewatches discusses recommends avoids"
).split()


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.where(norms > 0, norms, 1.0)


def _zipf_counts(n: int, exponent: float, draws: int, gen: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling over ranks 1..n with probability ~ rank^-exponent."""
    weights = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = gen.random(draws)
    ranks = np.searchsorted(cdf, u, side="left")
    return np.bincount(ranks, minlength=n).astype(np.int64)


def _orthonormal_columns(rows: int, cols: int, gen: np.random.Generator) -> np.ndarray:
    raw = gen.standard_normal((rows, cols))
    q, r = np.linalg.qr(raw)
    # canonical sign: positive diagonal of R, so the factorization is unique
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


@dataclass
class SyntheticWorld:
    """Immutable generated world plus lazy per-user scorer caches."""

    spec: WorldSpec
    catalog: Catalog
    users: list[UserRecord]
    embeddings: EmbeddingSet          # item vectors
    user_queries: EmbeddingSet        # per-user query vectors
    item_latents: np.ndarray
    user_latents: np.ndarray
    pop_score: np.ndarray
    item_bias: np.ndarray
    len_score: np.ndarray
    _item_index: dict[str, int] = field(repr=False, default_factory=dict)
    _user_index: dict[str, int] = field(repr=False, default_factory=dict)
    _rel_cache: dict[int, np.ndarray] = field(repr=False, default_factory=dict)
    _noise_cache: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self._item_index = {item_id: i for i, item_id in enumerate(self.catalog.item_ids)}
        self._user_index = {user.id: i for i, user in enumerate(self.users)}

    def user(self, user_id: str) -> UserRecord:
        return self.users[self._user_index[user_id]]

    def query_vector(self, user_id: str) -> np.ndarray:
        return self.user_queries.vector(user_id)

    def rel_row(self, user_id: str) -> np.ndarray:
        """True relevance of every catalog item for this user (catalog order)."""
        u = self._user_index[user_id]
        row = self._rel_cache.get(u)
        if row is None:
            mix = self.spec.gt_popularity_mix
            row = mix * self.pop_score + (1.0 - mix) * (self.item_latents @ self.user_latents[u])
            self._rel_cache[u] = row
        return row

    def _noise_row(self, u: int) -> np.ndarray:
        row = self._noise_cache.get(u)
        if row is None:
            row = rng.generator(self.spec.seed, "scorer-noise", u).standard_normal(self.catalog.size)
            self._noise_cache[u] = row
        return row

    def scorer_row(self, user_id: str) -> np.ndarray:
        """Scorer output for every catalog item (catalog order)."""
        u = self._user_index[user_id]
        s = self.spec
        return (s.scorer_signal * self.rel_row(user_id)
                + s.scorer_item_bias * self.item_bias
                + s.scorer_length_bias * self.len_score
                + self._noise_row(u))

    def scorer_score(self, user_id: str, item_id: str) -> float:
        """Deterministic score for one (user, item) pair, independent of
        evaluation order."""
        try:
            u = self._user_index[user_id]
        except KeyError:
            raise WorldSpecError(f"unknown user id {user_id!r}") from None
        try:
            i = self._item_index[item_id]
        except KeyError:
            raise WorldSpecError(f"unknown item id {item_id!r}") from None
        s = self.spec
        return float(s.scorer_signal * self.rel_row(user_id)[i]
                     + s.scorer_item_bias * self.item_bias[i]
                     + s.scorer_length_bias * self.len_score[i]
                     + self._noise_row(u)[i])

    def gt_map(self) -> dict[str, frozenset[str]]:
        return {user.id: user.gt_items for user in self.users}


def _make_items(spec: WorldSpec, counts: np.ndarray) -> list[Item]:
    gen = rng.generator(spec.seed, "metadata")
    width = max(5, len(str(spec.catalog_size - 1)))
    items = []
    for idx in range(spec.catalog_size):
        n_title = int(gen.integers(2, 4))
        title = " ".join(_TITLE_WORDS[int(w)] for w in gen.integers(0, len(_TITLE_WORDS), n_title)).title()
        n_genres = int(gen.integers(1, 4))
        genre_picks = gen.choice(len(_GENRES), size=n_genres, replace=False)
        n_tags = int(gen.integers(0, 16))
        tag_picks = gen.choice(len(_TAG_WORDS), size=min(n_tags, len(_TAG_WORDS)), replace=False)
        tags = tuple((_TAG_WORDS[int(t)], int(gen.integers(1, 500))) for t in tag_picks)
        items.append(Item(
            id=f"i{idx:0{width}d}",
            title=title,
            year=int(1950 + gen.integers(0, 75)),
            genres=tuple(_GENRES[int(g)] for g in genre_picks),
            tags=tags,
            popularity=int(counts[idx]),
        ))
    return items


def _profile_text(gen: np.random.Generator, affinity_items: list[Item]) -> str:
    words = []
    for item in affinity_items:
        words.append(item.title.lower())
        words.extend(item.genres[:2])
    filler = _PROFILE_FILLERS[int(gen.integers(0, len(_PROFILE_FILLERS)))]
    return f"{filler} " + " ".join(words)


def generate_world(spec: WorldSpec) -> SyntheticWorld:
    """Deterministically generate a world from its spec (see module docs)."""
    n, n_users = spec.catalog_size, spec.user_count

    item_latents = _unit_rows(rng.generator(spec.seed, "item-latent")
                              .standard_normal((n, spec.latent_dim)))
    user_latents = _unit_rows(rng.generator(spec.seed, "user-latent")
                              .standard_normal((n_users, spec.latent_dim)))

    perm = rng.generator(spec.seed, "pop-perm").permutation(n)
    counts_by_rank = _zipf_counts(n, spec.zipf_exponent,
                                  spec.pop_draws_per_item * n,
                                  rng.generator(spec.seed, "pop-draws"))
    counts = np.empty(n, dtype=np.int64)
    counts[perm] = counts_by_rank
    max_count = max(int(counts.max()), 1)
    pop_score = counts / max_count

    items = _make_items(spec, counts)
    catalog = Catalog(items)
    lengths = np.array([len(build_item_profile(item)) for item in items], dtype=np.float64)
    len_score = lengths / max(lengths.mean(), 1.0)

    projection = _orthonormal_columns(spec.embed_dim, spec.latent_dim,
                                      rng.generator(spec.seed, "projection"))
    item_signal = item_latents @ projection.T
    item_noise = _unit_rows(rng.generator(spec.seed, "item-noise")
                            .standard_normal((n, spec.embed_dim)))
    item_vectors = _unit_rows(spec.alignment * item_signal + (1.0 - spec.alignment) * item_noise)

    user_signal = user_latents @ projection.T
    user_noise = _unit_rows(rng.generator(spec.seed, "user-noise")
                            .standard_normal((n_users, spec.embed_dim)))
    query_vectors = _unit_rows(spec.alignment * user_signal + (1.0 - spec.alignment) * user_noise)

    item_ids = [item.id for item in items]
    uid_width = max(4, len(str(n_users - 1)))
    user_ids = [f"u{idx:0{uid_width}d}" for idx in range(n_users)]

    item_bias = rng.generator(spec.seed, "item-bias").standard_normal(n)

    mix = spec.gt_popularity_mix
    affinity = user_latents @ item_latents.T  # (users, items)
    users: list[UserRecord] = []
    profile_gen = rng.generator(spec.seed, "profiles")
    for u in range(n_users):
        rel = mix * pop_score + (1.0 - mix) * affinity[u]
        tie_perm = rng.generator(spec.seed, "gt-tiebreak", u).permutation(n)
        order = np.lexsort((tie_perm, -rel))
        gt = frozenset(item_ids[i] for i in order[:spec.gt_per_user])
        top_affinity = np.argsort(-affinity[u], kind="stable")[:3]
        profile = _profile_text(profile_gen, [items[i] for i in top_affinity])
        users.append(UserRecord(id=user_ids[u], profile_text=profile, gt_items=gt))

    return SyntheticWorld(
        spec=spec,
        catalog=catalog,
        users=users,
        embeddings=EmbeddingSet(item_ids, item_vectors),
        user_queries=EmbeddingSet(user_ids, query_vectors),
        item_latents=item_latents,
        user_latents=user_latents,
        pop_score=pop_score,
        item_bias=item_bias,
        len_score=len_score,
    )


def export_world(world: SyntheticWorld, out_dir: str | Path) -> dict[str, Path]:
    """Write the world in the interchange formats of the other modules.

    Emits items.csv, users.jsonl, item_embeddings.txt, user_queries.txt,
    scores.jsonl (the full user x item product, so keep exported worlds
    small) and world.json. Writing is deterministic: same world, same
    bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "catalog": out / "items.csv",
        "users": out / "users.jsonl",
        "item_embeddings": out / "item_embeddings.txt",
        "user_queries": out / "user_queries.txt",
        "scores": out / "scores.jsonl",
        "world": out / "world.json",
    }
    save_catalog(world.catalog, paths["catalog"])
    save_users(world.users, paths["users"])
    world.embeddings.save(paths["item_embeddings"])
    world.user_queries.save(paths["user_queries"])
    item_ids = world.catalog.item_ids
    with paths["scores"].open("w", encoding="utf-8") as fh:
        for user in world.users:
            row = world.scorer_row(user.id)
            for i, item_id in enumerate(item_ids):
                fh.write(json.dumps({"user_id": user.id, "item_id": item_id,
                                     "score": float(row[i])}) + "\n")
    paths["world"].write_text(json.dumps(world.spec.to_json_dict(), indent=2) + "\n",
                              encoding="utf-8")
    return paths
