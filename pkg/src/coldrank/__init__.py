"""coldrank: diagnostics and simulation for two-stage retrieve-then-rerank
cold-start recommender pipelines."""

from .catalog import (Catalog, Item, MissingGtReport, UserRecord,
                      build_item_profile, build_pair_text, load_catalog,
                      load_users, save_catalog, save_users, validate_users)
from .harness import (AggregateResult, PipelineConfig, RunInputs, RunSpec,
                      aggregate_runs, run, run_ablation, run_pipeline,
                      sample_users)
from .metrics import (ExposureReport, GtPositionStats, PerUserResult,
                      RankedList, exposure_report, gt_position_stats,
                      hit_rate_at_k, macro_recall, ndcg_at_k, recall_at_k)
from .retrieval import (Bm25Index, Bm25Params, CandidatePool, EmbeddingSet,
                        bm25_search, flat_search, hybrid_union,
                        popularity_topk, random_topk)
from .scoring import (CalibrationParams, EnsembleWeights, ScoreTable,
                      ensemble_score, fit_platt, platt_calibrate, rerank,
                      synthetic_scorer, temperature_scale)
from .stats import (RegressionFit, ScoreSeparationReport, StatTestReport,
                    bootstrap_ci, cohens_d, ols_simple, paired_comparison,
                    paired_t, score_separation, spearman,
                    wilcoxon_signed_rank)
from .synthgen import (DEFAULT_SEEDS, SyntheticWorld, WorldSpec,
                       export_world, generate_world)

__version__ = "0.1.0"
