"""Command-line entry point.

Subcommands wire the library into the reproduction workflow:

  ingest   validate catalog/user files, write normalized copies + report
  synth    generate a synthetic world from a [world] config and export it
  index    inspect embeddings and the BM25 index, write an index report
  run      execute configured pipelines across seeds, write logs + master
  ablate   pool-size ablation for the reranking pipelines
  analyze  paired statistical tests over existing run logs
  report   tables and plot-data CSVs from a finished run

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. All paths
are explicit flags; nothing is discovered from the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import catalog as cat
from . import config as cfg
from . import harness, report, stats, synthgen
from .metrics import GtPositionStats, exposure_from_top1
from .retrieval import Bm25Index, EmbeddingSet
from .scoring import ScoreTable


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); the contract is 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="coldrank", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="validate catalog/user files")
    p.add_argument("--catalog", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--users")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate and export a synthetic world")
    p.add_argument("--config", required=True, help="config file with a [world] section")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("index", help="inspect embeddings and BM25 index health")
    p.add_argument("--catalog", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True, help="path of the JSON index report")
    p.set_defaults(func=_cmd_index)

    for name in ("run", "ablate"):
        p = sub.add_parser(name, help="run experiment pipelines" if name == "run"
                           else "pool-size ablation study")
        # every flag here has a [run] config-file key of the same name;
        # flags override the config
        p.add_argument("--catalog")
        p.add_argument("--users")
        p.add_argument("--embeddings")
        p.add_argument("--queries", help="per-user query vectors (embeddings format)")
        p.add_argument("--scores", help="reranker scores JSONL")
        p.add_argument("--config", help="run config with [run] and [pipeline ...] sections")
        p.add_argument("--out")
        p.add_argument("--n-users", type=int, default=None)
        p.add_argument("--seeds", type=int, nargs="+", default=None)
        p.add_argument("--pool-size", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        if name == "run":
            p.add_argument("--pipelines", help="comma-separated subset of pipeline names")
            p.add_argument("--export-pools", action="store_true", default=None)
            p.add_argument("--gt-positions", action="store_true", default=None)
            p.set_defaults(func=_cmd_run)
        else:
            p.add_argument("--pool-sizes", type=int, nargs="+", default=None)
            p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("analyze", help="statistical tests over run logs")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--baseline", help="baseline pipeline (default: best hit rate)")
    p.add_argument("--out", help="output directory (default: run dir)")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("report", help="emit tables and plot data from a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, cfg.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# subcommands

def _cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog = cat.load_catalog(args.catalog, args.format)
    payload = {"catalog_size": catalog.size}
    cat.save_catalog(catalog, out / "items.normalized.csv")
    if args.users:
        users = cat.load_users(args.users)
        users, missing = cat.validate_users(users, catalog)
        cat.save_users(users, out / "users.normalized.jsonl")
        payload["users"] = len(users)
        payload["missing_gt"] = missing.to_json_dict()
    (out / "ingest_report.json").write_text(json.dumps(payload, indent=2) + "\n",
                                            encoding="utf-8")
    print(f"ingest ok: {catalog.size} items"
          + (f", {payload['users']} users" if args.users else ""))
    return 0


def _cmd_synth(args) -> int:
    spec = cfg.world_spec_from_config(args.config, seed=args.seed)
    world = synthgen.generate_world(spec)
    paths = synthgen.export_world(world, args.out)
    print(f"world seed={spec.seed}: {spec.catalog_size} items, "
          f"{spec.user_count} users -> {args.out}")
    for key in sorted(paths):
        print(f"  {key}: {paths[key]}")
    return 0


def _cmd_index(args) -> int:
    catalog = cat.load_catalog(args.catalog)
    warnings: list[str] = []
    index = Bm25Index(catalog)
    payload: dict = {
        "catalog": {"size": catalog.size},
        "bm25": {"documents": index.n_docs, "vocabulary": len(index.postings),
                 "avg_doc_len": index.avgdl},
    }
    if args.embeddings:
        emb = EmbeddingSet.load(args.embeddings)
        uncovered = [i for i in catalog.item_ids if i not in emb]
        extra = [i for i in emb.ids if i not in catalog]
        if emb.max_norm_drift > 1e-4:
            warnings.append(f"embedding norms drift up to {emb.max_norm_drift:.2e} "
                            "from 1.0 (renormalized at load)")
        if uncovered:
            warnings.append(f"{len(uncovered)} catalog items lack vectors")
        if extra:
            warnings.append(f"{len(extra)} vectors have no catalog item")
        payload["embeddings"] = {"count": len(emb), "dim": emb.dim,
                                 "max_norm_drift": emb.max_norm_drift,
                                 "missing_items": len(uncovered), "orphans": len(extra)}
    payload["warnings"] = warnings
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"index report -> {args.out} ({len(warnings)} warnings)")
    return 0


def _load_inputs(args, defaults: dict) -> harness.RunInputs:
    catalog_path = args.catalog or defaults.get("catalog")
    users_path = args.users or defaults.get("users")
    if not catalog_path or not users_path:
        raise UsageError("--catalog and --users are required (flag or config)")
    catalog = cat.load_catalog(catalog_path)
    users = cat.load_users(users_path)
    users, missing = cat.validate_users(users, catalog)
    if missing.affected_users:
        print(f"note: {missing.total_missing} ground-truth refs outside the catalog "
              f"({missing.affected_users} users affected)", file=sys.stderr)
    emb_path = args.embeddings or defaults.get("embeddings")
    queries_path = args.queries or defaults.get("queries")
    scores_path = args.scores or defaults.get("scores")
    item_emb = EmbeddingSet.load(emb_path) if emb_path else None
    queries = EmbeddingSet.load(queries_path) if queries_path else None
    table = ScoreTable.from_jsonl(scores_path) if scores_path else None
    return harness.RunInputs(catalog=catalog, users=users, item_embeddings=item_emb,
                             user_queries=queries, score_table=table)


def _default_pipelines(inputs: harness.RunInputs, pool_size: int, k: int) -> list[harness.PipelineConfig]:
    configs = [
        harness.PipelineConfig(name="random", retriever="random", reranker="none", pool_size=k, k=k),
        harness.PipelineConfig(name="popularity", retriever="popularity", reranker="none", pool_size=k, k=k),
    ]
    if inputs.item_embeddings is not None and inputs.user_queries is not None:
        configs.append(harness.PipelineConfig(name="cosine", retriever="vector",
                                              reranker="none", pool_size=k, k=k))
        configs.append(harness.PipelineConfig(name="candidates", retriever="vector",
                                              reranker="none", pool_size=pool_size, k=k))
        if inputs.score_table is not None:
            configs.append(harness.PipelineConfig(name="rerank", retriever="vector",
                                                  reranker="score_table",
                                                  pool_size=pool_size, k=k))
    return configs


def _build_spec(args, defaults: dict, pipelines: list[harness.PipelineConfig],
                inputs: harness.RunInputs, need_ablation: bool) -> harness.RunSpec:
    n_users = args.n_users if args.n_users is not None else defaults.get("n_users", len(inputs.users))
    seeds = args.seeds if args.seeds is not None else defaults.get("seeds", list(synthgen.DEFAULT_SEEDS))
    pool_size = args.pool_size if args.pool_size is not None else defaults.get("pool_size", 1000)
    k = args.k if args.k is not None else defaults.get("k", 10)
    workers = args.workers if args.workers is not None else defaults.get("workers", os.cpu_count() or 1)
    out = args.out or defaults.get("out")
    if not out:
        raise UsageError("--out is required (flag or config)")
    if not pipelines:
        pipelines = _default_pipelines(inputs, pool_size, k)
    wanted = getattr(args, "pipelines", None)
    if wanted:
        names = [n.strip() for n in wanted.split(",") if n.strip()]
        known = {p.name: p for p in pipelines}
        missing = [n for n in names if n not in known]
        if missing:
            raise UsageError(f"unknown pipelines: {', '.join(missing)} "
                             f"(available: {', '.join(known)})")
        pipelines = [known[n] for n in names]
    pool_sizes = None
    if need_ablation:
        pool_sizes = getattr(args, "pool_sizes", None) or defaults.get("pool_sizes")
        if not pool_sizes:
            raise UsageError("--pool-sizes is required (flag or config)")
    n_users = min(n_users, len(inputs.users))
    cutoffs = tuple(defaults.get("recall_cutoffs", (50, 200, 1000)))
    export_pools = getattr(args, "export_pools", None)
    gt_positions = getattr(args, "gt_positions", None)
    return harness.RunSpec(
        n_users=n_users,
        seeds=list(seeds),
        pipelines=pipelines,
        output_dir=Path(out),
        pool_sizes_ablation=list(pool_sizes) if pool_sizes else None,
        recall_cutoffs=cutoffs,
        workers=workers,
        export_pools=bool(export_pools if export_pools is not None
                          else defaults.get("export_pools", False)),
        gt_positions=bool(gt_positions if gt_positions is not None
                          else defaults.get("gt_positions", False)),
    )


def _cmd_run(args) -> int:
    defaults, pipelines = cfg.run_settings_from_config(args.config) if args.config else ({}, [])
    inputs = _load_inputs(args, defaults)
    spec = _build_spec(args, defaults, pipelines, inputs, need_ablation=False)
    agg = harness.run(spec, inputs)
    print(report.emit_main_table(agg, "text"), end="")
    print(f"master: {spec.output_dir / 'master.json'}")
    return 0


def _cmd_ablate(args) -> int:
    defaults, pipelines = cfg.run_settings_from_config(args.config) if args.config else ({}, [])
    inputs = _load_inputs(args, defaults)
    spec = _build_spec(args, defaults, pipelines, inputs, need_ablation=True)
    rows = harness.run_ablation(spec, inputs)
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(report.emit_ablation_table(rows, "csv"),
                                      encoding="utf-8")
    print(report.emit_ablation_table(rows, "text"), end="")
    print(f"ablation table: {out / 'ablation.csv'}")
    return 0


def _per_user_vectors(run_dir: Path) -> dict[str, dict[int, list[harness.PerUserResult]]]:
    by_pipeline: dict[str, dict[int, list[harness.PerUserResult]]] = {}
    for path in sorted(run_dir.glob("*__seed*.jsonl")):
        name, _, seed_part = path.stem.rpartition("__seed")
        by_pipeline.setdefault(name, {})[int(seed_part)] = harness.read_log(path)
    if not by_pipeline:
        raise UsageError(f"no run logs in {run_dir}")
    return by_pipeline


def _cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    by_pipeline = _per_user_vectors(run_dir)

    def concat(name: str, field: str) -> list[float]:
        values: list[float] = []
        for seed in sorted(by_pipeline[name]):
            values.extend(float(getattr(r, field)) for r in by_pipeline[name][seed])
        return values

    agg = harness.aggregate_runs(run_dir)
    baseline = args.baseline or max(agg.pipelines, key=lambda n: agg.pipelines[n]["hr"][0])
    if baseline not in by_pipeline:
        raise UsageError(f"baseline pipeline {baseline!r} not found")
    comparisons: dict[str, dict] = {}
    for name in sorted(by_pipeline):
        if name == baseline:
            continue
        entry: dict = {}
        for field, label in (("hit", "hr"), ("ndcg", "ndcg")):
            x, y = concat(name, field), concat(baseline, field)
            if len(x) != len(y):
                raise UsageError(f"unpaired logs between {name!r} and {baseline!r}")
            rep = stats.paired_comparison(x, y, seed=0)
            entry[label] = rep.to_json_dict()
        comparisons[f"{name}_vs_{baseline}"] = entry

    payload: dict = {"baseline": baseline, "comparisons": comparisons}

    # association between retrieval coverage and final quality, one point
    # per (pipeline, seed)
    cutoff = _regression_cutoff(by_pipeline)
    if cutoff is not None:
        points = []
        for name, runs in sorted(by_pipeline.items()):
            for seed in sorted(runs):
                results = runs[seed]
                recalls = [r.recall_at.get(cutoff) for r in results]
                recalls = [r for r in recalls if r is not None]
                if not recalls:
                    continue
                hr = sum(r.hit for r in results) / len(results)
                points.append((sum(recalls) / len(recalls), hr))
        xs = [p[0] for p in points]
        if len(points) >= 3 and max(xs) > min(xs):
            fit = stats.ols_simple(xs, [p[1] for p in points])
            payload["recall_hr_regression"] = {"cutoff": cutoff, **fit.to_json_dict(),
                                               "n_points": len(points)}
    path = report.write_stat_tests(payload, out_dir / "stat_tests.json")
    print(f"stat tests ({len(comparisons)} comparisons vs {baseline!r}) -> {path}")
    return 0


def _regression_cutoff(by_pipeline) -> int | None:
    cutoffs: set[int] = set()
    for runs in by_pipeline.values():
        for results in runs.values():
            for r in results:
                cutoffs.update(r.recall_at)
            break
    if not cutoffs:
        return None
    return 200 if 200 in cutoffs else sorted(cutoffs)[len(cutoffs) // 2]


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    master_path = run_dir / "master.json"
    if master_path.exists():
        agg = harness.AggregateResult.from_json_dict(json.loads(master_path.read_text()))
    else:
        agg = harness.aggregate_runs(run_dir)
    table_paths = report.write_main_tables(agg, out)

    by_pipeline = _per_user_vectors(run_dir)
    exposures = {}
    for name, runs in by_pipeline.items():
        top1 = [r.top1_item for results in runs.values() for r in results]
        try:
            exposures[name] = exposure_from_top1(top1)
        except ValueError:
            continue
    if exposures:
        report.write_exposure_table(exposures, out / "exposure.csv")

    series = report.recall_curve_series(agg)
    k = agg.meta.get("k", 10)
    try:
        series.append(report.bar_series(agg, "hr", name=f"bar_hr_at_{k}"))
    except ValueError:
        pass
    for name, exposure in sorted(exposures.items()):
        counts = sorted(exposure.top1_histogram.values(), reverse=True)
        series.append(report.cumulative_exposure_series(counts, name=f"cumulative_exposure_{name}"))
    series.extend(_gt_position_series(run_dir))
    series.extend(_separation_series(run_dir))
    series.append(_recall_hr_scatter(by_pipeline))
    plot_paths = report.write_plot_series([s for s in series if s is not None], out)
    print(f"report: {len(table_paths)} tables, {len(plot_paths)} plot series -> {out}")
    return 0


def _gt_position_series(run_dir: Path):
    for path in sorted(run_dir.glob("gt_positions__seed*.json")):
        payload = json.loads(path.read_text())
        stats_obj = GtPositionStats(
            median=payload["median"], q1=payload["q1"], q3=payload["q3"],
            histogram_edges=payload["histogram_edges"],
            histogram_counts=payload["histogram_counts"],
            fraction_within={int(k): v for k, v in payload["fraction_within"].items()},
            n_positions=payload["n_positions"],
        )
        seed = path.stem.rpartition("__seed")[2]
        yield report.gt_position_histogram_series(stats_obj, name=f"gt_positions_seed{seed}")


def _separation_series(run_dir: Path):
    for path in sorted(run_dir.glob("separation__*__seed*.json")):
        payload = json.loads(path.read_text())
        tag = path.stem[len("separation__"):]
        yield report.score_histogram_series(payload["bin_edges"], payload["rel_hist"],
                                            name=f"score_hist_relevant_{tag}")
        yield report.score_histogram_series(payload["bin_edges"], payload["irr_hist"],
                                            name=f"score_hist_irrelevant_{tag}")


def _recall_hr_scatter(by_pipeline):
    cutoff = _regression_cutoff(by_pipeline)
    if cutoff is None:
        return None
    points = []
    for name, runs in sorted(by_pipeline.items()):
        for seed in sorted(runs):
            results = runs[seed]
            recalls = [r.recall_at.get(cutoff) for r in results]
            recalls = [r for r in recalls if r is not None]
            if not recalls:
                continue
            points.append((sum(recalls) / len(recalls),
                           sum(r.hit for r in results) / len(results)))
    if not points:
        return None
    return report.scatter_series(points, name=f"recall{cutoff}_vs_hr")


if __name__ == "__main__":
    sys.exit(main())
