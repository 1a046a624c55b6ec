"""Experiment orchestration: pipeline configs, multi-seed runs, pool-size
ablation, timing capture, JSONL logging and cross-seed aggregation.

Determinism contract: identical inputs and seeds produce identical
per-user logs except for the wall-clock ``rerank_seconds`` field. User
tasks share no mutable state, so they may run on a thread pool; results
are always collected in user order.

The ``none`` reranker is implemented as reranking with a constant zero
score, which by the tie rule returns the pool's items in ascending id
order. This makes "candidates only" and "rerank with constant scores"
identical by construction, and realizes a plain cosine baseline as
retriever=vector with pool_size=K.
"""

from __future__ import annotations

import dataclasses
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter
from typing import Callable, Iterable, Mapping, Sequence

from . import rng
from .catalog import Catalog, UserRecord
from .metrics import (PerUserResult, gini_coefficient, gt_position_stats,
                      ndcg_at_k, recall_at_k)
from .retrieval import (Bm25Index, Bm25Params, CandidatePool, EmbeddingSet,
                        flat_search, hybrid_union, popularity_topk, random_topk)
from .scoring import (CalibrationParams, EnsembleWeights, ScoreTable,
                      ensemble_score, platt_calibrate, rerank,
                      temperature_scale)
from .stats import ScoreSeparationReport, score_separation
from .synthgen import SyntheticWorld

RETRIEVERS = ("random", "popularity", "vector", "bm25", "hybrid")
RERANKERS = ("none", "score_table", "synthetic", "ensemble")


class HarnessError(ValueError):
    pass


@dataclass
class PipelineConfig:
    name: str
    retriever: str
    reranker: str = "none"
    pool_size: int = 1000
    k: int = 10
    calibration: CalibrationParams | None = None
    ensemble_weights: EnsembleWeights | None = None

    def __post_init__(self):
        if not self.name or "__" in self.name:
            raise HarnessError("pipeline name must be non-empty and free of '__'")
        if self.retriever not in RETRIEVERS:
            raise HarnessError(f"unknown retriever {self.retriever!r}")
        if self.reranker not in RERANKERS:
            raise HarnessError(f"unknown reranker {self.reranker!r}")
        if self.pool_size < self.k:
            raise HarnessError("pool_size must be >= K")


@dataclass
class RunSpec:
    n_users: int
    seeds: list[int]
    pipelines: list[PipelineConfig]
    output_dir: Path
    pool_sizes_ablation: list[int] | None = None
    recall_cutoffs: tuple[int, ...] = (50, 200, 1000)
    workers: int = 1
    export_pools: bool = False
    gt_positions: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise HarnessError("need at least one seed")
        if self.n_users < 1:
            raise HarnessError("n_users must be >= 1")
        if len({p.name for p in self.pipelines}) != len(self.pipelines):
            raise HarnessError("pipeline names must be unique")
        self.output_dir = Path(self.output_dir)


@dataclass
class RunInputs:
    """Everything a pipeline may need; unused fields can stay None."""

    catalog: Catalog
    users: list[UserRecord]
    item_embeddings: EmbeddingSet | None = None
    user_queries: EmbeddingSet | None = None
    score_table: ScoreTable | None = None
    world: SyntheticWorld | None = None
    bm25_params: Bm25Params | None = None

    @classmethod
    def from_world(cls, world: SyntheticWorld) -> "RunInputs":
        return cls(catalog=world.catalog, users=list(world.users),
                   item_embeddings=world.embeddings,
                   user_queries=world.user_queries, world=world)


@dataclass
class PipelineRun:
    config: PipelineConfig
    seed: int
    results: list[PerUserResult]
    pools: dict[str, CandidatePool]          # truncated pools fed to the reranker
    ranked: dict[str, "object"]
    separation: ScoreSeparationReport | None = None


def sample_users(users: Sequence[UserRecord], n: int, seed: int) -> list[UserRecord]:
    """Uniform sample without replacement, in sampling-sequence order."""
    if n > len(users):
        raise HarnessError(f"cannot sample {n} of {len(users)} users")
    gen = rng.generator(seed, "user-sample")
    picks = gen.choice(len(users), size=n, replace=False)
    return [users[int(i)] for i in picks]


def _query_vector(inputs: RunInputs, user: UserRecord):
    if inputs.user_queries is None:
        raise HarnessError("vector retrieval needs per-user query vectors")
    return inputs.user_queries.vector(user.id)


def _make_retriever(config: PipelineConfig, inputs: RunInputs, seed: int,
                    diag_k: int) -> Callable[[int, UserRecord], CandidatePool]:
    catalog = inputs.catalog
    if config.retriever == "random":
        def retrieve(ordinal: int, user: UserRecord) -> CandidatePool:
            sub = rng.derive_seed(seed, "retrieval", config.name, ordinal)
            return random_topk(catalog, diag_k, sub, user.id)
        return retrieve
    if config.retriever == "popularity":
        shared = popularity_topk(catalog, diag_k)
        def retrieve(ordinal: int, user: UserRecord) -> CandidatePool:
            return CandidatePool(user.id, list(shared.entries), diag_k)
        return retrieve
    if config.retriever == "vector":
        if inputs.item_embeddings is None:
            raise HarnessError("vector retrieval needs item embeddings")
        emb = inputs.item_embeddings
        def retrieve(ordinal: int, user: UserRecord) -> CandidatePool:
            return flat_search(_query_vector(inputs, user), emb, diag_k, user.id)
        return retrieve
    if config.retriever == "bm25":
        index = Bm25Index(catalog, inputs.bm25_params)
        def retrieve(ordinal: int, user: UserRecord) -> CandidatePool:
            return index.search(user.profile_text, diag_k, user.id)
        return retrieve
    if config.retriever == "hybrid":
        if inputs.item_embeddings is None:
            raise HarnessError("hybrid retrieval needs item embeddings")
        emb = inputs.item_embeddings
        index = Bm25Index(catalog, inputs.bm25_params)
        def retrieve(ordinal: int, user: UserRecord) -> CandidatePool:
            vec_pool = flat_search(_query_vector(inputs, user), emb, diag_k, user.id)
            text_pool = index.search(user.profile_text, diag_k, user.id)
            return hybrid_union([vec_pool, text_pool], diag_k)
        return retrieve
    raise HarnessError(f"unknown retriever {config.retriever!r}")


def _make_score_fn(config: PipelineConfig, inputs: RunInputs) -> Callable[[str, str], float]:
    def base_fn() -> Callable[[str, str], float]:
        if config.reranker == "score_table":
            if inputs.score_table is None:
                raise HarnessError(f"pipeline {config.name!r} needs a score table")
            return inputs.score_table.get
        if config.reranker in ("synthetic", "ensemble") and inputs.world is not None:
            return inputs.world.scorer_score
        if config.reranker == "ensemble" and inputs.score_table is not None:
            return inputs.score_table.get
        if config.reranker == "synthetic":
            raise HarnessError(f"pipeline {config.name!r} needs a synthetic world")
        raise HarnessError(f"pipeline {config.name!r} needs a score source")

    if config.reranker == "none":
        return lambda user_id, item_id: 0.0

    ce = base_fn()
    calibration = config.calibration
    if calibration is not None:
        raw = ce
        if calibration.platt_a != 1.0 or calibration.platt_b != 0.0:
            def ce(user_id, item_id, _raw=raw, _p=calibration):
                return platt_calibrate(temperature_scale(_raw(user_id, item_id), _p.temperature), _p)
        else:
            def ce(user_id, item_id, _raw=raw, _t=calibration.temperature):
                return temperature_scale(_raw(user_id, item_id), _t)

    if config.reranker in ("score_table", "synthetic"):
        return ce

    # ensemble: reranker score + log popularity + embedding similarity
    if inputs.item_embeddings is None or inputs.user_queries is None:
        raise HarnessError("ensemble reranking needs item embeddings and query vectors")
    weights = config.ensemble_weights or EnsembleWeights()
    catalog = inputs.catalog
    emb = inputs.item_embeddings
    queries = inputs.user_queries

    def fn(user_id: str, item_id: str) -> float:
        sim = float(queries.vector(user_id) @ emb.vector(item_id))
        return ensemble_score(ce(user_id, item_id), catalog[item_id].popularity, sim, weights)
    return fn


def run_pipeline(config: PipelineConfig, users: Sequence[UserRecord], inputs: RunInputs,
                 seed: int, recall_cutoffs: Sequence[int] = (50, 200, 1000),
                 workers: int = 1, compute_separation: bool = False) -> PipelineRun:
    """Retrieve, optionally rerank, and score metrics for every user.

    Recall cutoffs are evaluated on the retriever's ranking extended to the
    largest cutoff (prefix-consistent with the pool), while the reranker
    sees exactly the first ``pool_size`` candidates. Only the scoring loop
    is timed, matching the reported per-user reranking cost.
    """
    catalog_size = inputs.catalog.size
    diag_k = min(max([config.pool_size, *recall_cutoffs]), catalog_size)
    pool_k = min(config.pool_size, catalog_size)
    retrieve = _make_retriever(config, inputs, seed, diag_k)
    score_fn = _make_score_fn(config, inputs)

    def one_user(task: tuple[int, UserRecord]):
        ordinal, user = task
        diag_pool = retrieve(ordinal, user)
        pool = diag_pool.truncated(pool_k)
        t0 = perf_counter()
        scored = {item_id: score_fn(user.id, item_id) for item_id in pool.item_ids}
        elapsed = perf_counter() - t0
        ranked = rerank(pool, scored, config.k)
        gt = user.gt_items
        hit = 1 if set(ranked.item_ids) & gt else 0
        ndcg = ndcg_at_k(ranked, gt, config.k)
        recall_at: dict[int, float | None] = {}
        for cutoff in recall_cutoffs:
            recall_at[cutoff] = recall_at_k(diag_pool, gt, cutoff) if gt else None
        result = PerUserResult(user_id=user.id, hit=hit, ndcg=ndcg, recall_at=recall_at,
                               top1_item=ranked.top1_item, rerank_seconds=elapsed)
        return result, pool, ranked

    tasks = list(enumerate(users))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            outcomes = list(pool_exec.map(one_user, tasks))
    else:
        outcomes = [one_user(t) for t in tasks]

    results = [r for r, _, _ in outcomes]
    pools = {p.user_id: p for _, p, _ in outcomes}
    ranked = {rl.user_id: rl for _, _, rl in outcomes}
    separation = None
    if compute_separation and config.reranker != "none":
        gt = {u.id: u.gt_items for u in users}
        try:
            separation = score_separation(score_fn, pools, gt)
        except ValueError:
            separation = None  # a partition was empty; nothing to report
    return PipelineRun(config=config, seed=seed, results=results, pools=pools,
                       ranked=ranked, separation=separation)


# ---------------------------------------------------------------------------
# logging and aggregation

def write_log(run: PipelineRun, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{run.config.name}__seed{run.seed}.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for result in run.results:
            fh.write(json.dumps(result.to_json_dict()) + "\n")
    return path


def write_pools(run: PipelineRun, out_dir: str | Path) -> Path:
    pools_dir = Path(out_dir) / "pools"
    pools_dir.mkdir(parents=True, exist_ok=True)
    path = pools_dir / f"{run.config.name}__seed{run.seed}.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for result in run.results:  # user order, not dict order
            pool = run.pools[result.user_id]
            fh.write(json.dumps({
                "user_id": pool.user_id,
                "entries": [[item_id, score] for item_id, score in pool.entries],
                "pool_size": pool.pool_size,
            }) + "\n")
    return path


def read_log(path: str | Path) -> list[PerUserResult]:
    results = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                results.append(PerUserResult.from_json_dict(json.loads(line)))
    return results


@dataclass
class AggregateResult:
    """Per-pipeline metric means and across-seed standard deviations."""

    pipelines: dict[str, dict[str, tuple[float, float | None]]]
    meta: dict
    log_paths: list[Path] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        out: dict = {}
        for name, metrics in self.pipelines.items():
            out[name] = {m: {"mean": mean, "sd": sd} for m, (mean, sd) in metrics.items()}
        out["meta"] = self.meta
        return out

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "AggregateResult":
        pipelines = {}
        for name, metrics in payload.items():
            if name == "meta":
                continue
            pipelines[name] = {m: (v["mean"], v["sd"]) for m, v in metrics.items()}
        return cls(pipelines=pipelines, meta=dict(payload.get("meta", {})))


def _metrics_from_results(results: list[PerUserResult]) -> dict[str, float]:
    if not results:
        raise HarnessError("empty result log")
    n = len(results)
    metrics = {
        "hr": sum(r.hit for r in results) / n,
        "ndcg": sum(r.ndcg for r in results) / n,
    }
    cutoffs = sorted(results[0].recall_at)
    for cutoff in cutoffs:
        values = [r.recall_at[cutoff] for r in results if r.recall_at.get(cutoff) is not None]
        if values:
            metrics[f"recall@{cutoff}"] = sum(values) / len(values)
    lists = [r for r in results if r.top1_item is not None]
    if lists:
        histogram = Counter(r.top1_item for r in lists)
        metrics["unique_top1"] = float(len(histogram))
        metrics["gini"] = gini_coefficient(list(histogram.values()))
    metrics["rerank_seconds"] = sum(r.rerank_seconds for r in results) / n
    return metrics


def _mean_sd(values: list[float]) -> tuple[float, float | None]:
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, var ** 0.5


def aggregate_runs(log_dirs: str | Path | Iterable[str | Path],
                   out_path: str | Path | None = None,
                   meta: Mapping | None = None) -> AggregateResult:
    """Aggregate per-(pipeline, seed) logs into across-seed mean and sd.

    Every seed must cover the same pipeline set. With a single seed the
    across-seed sd is reported absent (null in the master JSON).
    """
    if isinstance(log_dirs, (str, Path)):
        log_dirs = [log_dirs]
    paths: list[Path] = []
    for d in log_dirs:
        paths.extend(sorted(Path(d).glob("*__seed*.jsonl")))
    if not paths:
        raise HarnessError("no run logs found")
    by_pipeline: dict[str, dict[int, dict[str, float]]] = {}
    n_users_seen: set[int] = set()
    for path in paths:
        name, _, seed_part = path.stem.rpartition("__seed")
        try:
            seed = int(seed_part)
        except ValueError:
            raise HarnessError(f"cannot parse seed from log name {path.name!r}") from None
        results = read_log(path)
        n_users_seen.add(len(results))
        by_pipeline.setdefault(name, {})[seed] = _metrics_from_results(results)
    seed_sets = {name: tuple(sorted(runs)) for name, runs in by_pipeline.items()}
    if len(set(seed_sets.values())) != 1:
        raise HarnessError(f"inconsistent pipeline/seed coverage: {seed_sets}")
    pipelines: dict[str, dict[str, tuple[float, float | None]]] = {}
    for name, runs in sorted(by_pipeline.items()):
        metric_names = sorted({m for metrics in runs.values() for m in metrics})
        agg = {}
        for metric in metric_names:
            values = [metrics[metric] for _, metrics in sorted(runs.items()) if metric in metrics]
            agg[metric] = _mean_sd(values)
        pipelines[name] = agg
    seeds = sorted(next(iter(seed_sets.values())))
    full_meta = {"seeds": seeds, "n_users": max(n_users_seen) if n_users_seen else 0}
    if meta:
        full_meta.update(meta)
    result = AggregateResult(pipelines=pipelines, meta=full_meta, log_paths=paths)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(result.to_json_dict(), indent=2) + "\n",
                                  encoding="utf-8")
    return result


def run(spec: RunSpec, inputs: RunInputs) -> AggregateResult:
    """Execute every (seed, pipeline) cell and aggregate the logs."""
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_paths = []
    for seed in spec.seeds:
        seed_users = sample_users(inputs.users, spec.n_users, seed)
        for config in spec.pipelines:
            prun = run_pipeline(config, seed_users, inputs, seed,
                                recall_cutoffs=spec.recall_cutoffs,
                                workers=spec.workers, compute_separation=True)
            log_paths.append(write_log(prun, out))
            if prun.separation is not None:
                sep_path = out / f"separation__{config.name}__seed{seed}.json"
                sep_path.write_text(json.dumps(prun.separation.to_json_dict(), indent=2) + "\n",
                                    encoding="utf-8")
            if spec.export_pools:
                write_pools(prun, out)
        if spec.gt_positions:
            _write_gt_positions(spec, inputs, seed_users, seed, out)
    pool_sizes = sorted({p.pool_size for p in spec.pipelines})
    meta = {
        "pool_size": pool_sizes[0] if len(pool_sizes) == 1 else pool_sizes,
        "k": sorted({p.k for p in spec.pipelines})[0],
        "recall_cutoffs": list(spec.recall_cutoffs),
    }
    return aggregate_runs(out, out_path=out / "master.json", meta=meta)


def _write_gt_positions(spec: RunSpec, inputs: RunInputs, users: Sequence[UserRecord],
                        seed: int, out: Path) -> None:
    if inputs.item_embeddings is None or inputs.user_queries is None:
        raise HarnessError("gt-position analysis needs embeddings and query vectors")
    rankings = {}
    for user in users:
        pool = flat_search(_query_vector(inputs, user), inputs.item_embeddings,
                           inputs.catalog.size, user.id)
        rankings[user.id] = pool.item_ids
    gt = {u.id: u.gt_items for u in users}
    stats = gt_position_stats(rankings, gt, cutoffs=spec.recall_cutoffs)
    path = out / f"gt_positions__seed{seed}.json"
    path.write_text(json.dumps(stats.to_json_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class AblationRow:
    pool_size: int
    hr: float
    ndcg: float
    rerank_seconds: float


def run_ablation(spec: RunSpec, inputs: RunInputs) -> list[AblationRow]:
    """One full multi-seed run per candidate pool size, for every
    reranking pipeline in the run spec (means are taken across seeds and
    reranking pipelines)."""
    if not spec.pool_sizes_ablation:
        raise HarnessError("run_ablation needs pool_sizes_ablation")
    rerankers = [p for p in spec.pipelines if p.reranker != "none"]
    if not rerankers:
        raise HarnessError("pool-size ablation needs a reranking pipeline")
    rows = []
    for pool_size in spec.pool_sizes_ablation:
        configs = [dataclasses.replace(p, pool_size=max(pool_size, p.k)) for p in rerankers]
        sub = dataclasses.replace(spec, pipelines=configs,
                                  output_dir=Path(spec.output_dir) / f"ablation_pool{pool_size}",
                                  pool_sizes_ablation=None)
        agg = run(sub, inputs)
        hr = [metrics["hr"][0] for metrics in agg.pipelines.values()]
        ndcg = [metrics["ndcg"][0] for metrics in agg.pipelines.values()]
        secs = [metrics["rerank_seconds"][0] for metrics in agg.pipelines.values()]
        rows.append(AblationRow(pool_size=pool_size,
                                hr=sum(hr) / len(hr),
                                ndcg=sum(ndcg) / len(ndcg),
                                rerank_seconds=sum(secs) / len(secs)))
    return rows
