"""Command-line pipeline: every stage on a small corpus in a temp workdir."""

import json

import pytest
from synth_corpus import generate_pairs, write_jsonl

from cssam.cli import (
    EXIT_CHECKPOINT,
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    RunConfig,
    main,
)

SMALL_FLAGS = [
    "--emb-dim", "16", "--hidden", "16", "--blocks", "1",
    "--max-code-len", "60", "--max-query-len", "12", "--max-nodes", "40",
    "--epochs", "2", "--batch-size", "8", "--lr", "1e-3", "--dropout", "0.0",
    "--pretrain-epochs", "2", "--walks-per-node", "2", "--walk-length", "6",
    "--pool-size", "0", "--seed", "3", "--threads", "1",
]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Run the full pipeline once; later tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.jsonl"
    write_jsonl(generate_pairs(16, seed=2), corpus)
    wd = root / "wd"
    base = ["--corpus", str(corpus), "--workdir", str(wd), *SMALL_FLAGS]
    for cmd in ("ingest", "graphs", "pretrain", "train"):
        assert main([cmd, *base]) == EXIT_OK, f"{cmd} failed"
    return root, corpus, wd, base


# ---------------------------------------------------------------------------
# artifacts

def test_ingest_artifacts(workdir):
    _, _, wd, _ = workdir
    dataset = (wd / "dataset.jsonl").read_text().strip().split("\n")
    assert len(dataset) == 16
    rec = json.loads(dataset[0])
    assert set(rec) == {"id", "code", "code_tokens", "docstring", "lang", "query_tokens"}
    summary = json.loads((wd / "ingest_summary.json").read_text())
    assert summary["pairs"] == 16
    assert (wd / "vocab_code.json").exists() and (wd / "vocab_query.json").exists()


def test_ingest_rerun_is_idempotent(workdir):
    _, corpus, wd, base = workdir
    before = (wd / "dataset.jsonl").read_bytes()
    assert main(["ingest", *base]) == EXIT_OK
    assert (wd / "dataset.jsonl").read_bytes() == before


def test_graphs_artifacts(workdir):
    _, _, wd, _ = workdir
    lines = (wd / "graphs.jsonl").read_text().strip().split("\n")
    assert len(lines) == 16
    stats = json.loads((wd / "graph_stats.json").read_text())
    assert stats["mean_csrg_nodes"] <= stats["mean_ast_nodes"]
    assert stats["skipped"] == 0


def test_pretrain_artifacts(workdir):
    _, _, wd, _ = workdir
    for prefix in ("emb_code", "emb_query", "emb_nodes"):
        assert (wd / f"{prefix}.json").exists()
        assert (wd / f"{prefix}.f32").exists()


def test_train_artifacts(workdir):
    _, _, wd, _ = workdir
    assert (wd / "checkpoint.json").exists() and (wd / "checkpoint.f32").exists()
    log_lines = (wd / "train_log.jsonl").read_text().strip().split("\n")
    assert len(log_lines) == 2  # --epochs 2
    assert set(json.loads(log_lines[0])) == {
        "epoch", "mean_loss", "active_fraction", "wall_seconds"
    }


# ---------------------------------------------------------------------------
# search and eval

def test_search_json_output(workdir, capsys):
    _, _, _, base = workdir
    pairs = generate_pairs(16, seed=2)
    assert main(["search", pairs[0].docstring, "--k", "3", *base]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out.strip())
    assert set(doc) == {"query", "results"}
    assert len(doc["results"]) == 3
    assert all(set(r) == {"id", "score", "snippet_preview"} for r in doc["results"])


def test_search_text_output(workdir, capsys):
    _, _, _, base = workdir
    assert main(["search", "add the buffer", "--k", "2", "--text", *base]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("query: add the buffer")
    assert " 1. " in out and " 2. " in out


def test_eval_oracle_scorer(workdir, capsys):
    _, _, wd, base = workdir
    assert main(["eval", "--scorer", "oracle", *base]) == EXIT_OK
    out = capsys.readouterr().out
    assert "MRR" in out and "1.0000" in out
    report = json.loads((wd / "eval_report.json").read_text())
    assert report["metrics"]["MRR"] == 1.0
    assert report["scorer"] == "oracle"


def test_eval_random_scorer_writes_report(workdir):
    _, _, wd, base = workdir
    assert main(["eval", "--scorer", "random", *base]) == EXIT_OK
    report = json.loads((wd / "eval_report.json").read_text())
    assert 0.0 < report["metrics"]["MRR"] < 1.0
    assert report["pool_mode"] == "full"


def test_eval_model_scorer(workdir):
    _, _, wd, base = workdir
    assert main(["eval", *base]) == EXIT_OK
    report = json.loads((wd / "eval_report.json").read_text())
    assert report["scorer"] == "model"
    assert 0.0 <= report["metrics"]["MRR"] <= 1.0


# ---------------------------------------------------------------------------
# exit codes and precedence

def test_missing_corpus_is_a_data_error(tmp_path, capsys):
    code = main(["ingest", "--corpus", str(tmp_path / "nope.jsonl"),
                 "--workdir", str(tmp_path / "wd")])
    assert code == EXIT_DATA
    assert "not found" in capsys.readouterr().err


def test_ingest_without_corpus_is_usage(tmp_path):
    assert main(["ingest", "--workdir", str(tmp_path / "wd")]) == EXIT_USAGE


def test_bad_flag_value_is_usage(tmp_path):
    assert main(["ingest", "--corpus", "x", "--batch-size", "1",
                 "--workdir", str(tmp_path / "wd")]) == EXIT_USAGE


def test_search_without_checkpoint_is_checkpoint_error(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    write_jsonl(generate_pairs(4, seed=0), corpus)
    wd = tmp_path / "wd"
    assert main(["ingest", "--corpus", str(corpus), "--workdir", str(wd)]) == EXIT_OK
    code = main(["search", "query text", "--workdir", str(wd)])
    assert code == EXIT_CHECKPOINT
    assert "checkpoint" in capsys.readouterr().err


def test_unknown_config_key_is_usage(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"windowsize": 5}))
    assert main(["ingest", "--config", str(cfg)]) == EXIT_USAGE
    assert "unknown config keys" in capsys.readouterr().err


def test_workdir_env_override(tmp_path, monkeypatch, capsys):
    corpus = tmp_path / "c.jsonl"
    write_jsonl(generate_pairs(4, seed=0), corpus)
    env_wd = tmp_path / "from_env"
    monkeypatch.setenv("CSSAM_WORKDIR", str(env_wd))
    assert main(["ingest", "--corpus", str(corpus)]) == EXIT_OK
    assert (env_wd / "dataset.jsonl").exists()
    # an explicit flag still wins over the environment
    flag_wd = tmp_path / "from_flag"
    assert main(["ingest", "--corpus", str(corpus), "--workdir", str(flag_wd)]) == EXIT_OK
    assert (flag_wd / "dataset.jsonl").exists()


def test_flags_beat_config_file_beat_defaults(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"epochs": 7, "lr": 0.5}))
    file_only = RunConfig.from_sources(json.loads(cfg_file.read_text()), {})
    assert file_only.epochs == 7 and file_only.lr == 0.5
    merged = RunConfig.from_sources(json.loads(cfg_file.read_text()), {"epochs": 2})
    assert merged.epochs == 2 and merged.lr == 0.5
    assert RunConfig().epochs == 100  # default untouched


def test_config_defaults_match_module_defaults():
    """The flat run config re-declares model/train defaults; keep them in sync."""
    from cssam.model import ModelConfig
    from cssam.train import TrainConfig

    run = RunConfig()
    mc, tc = run.model_config(), run.train_config()
    ref_m, ref_t = ModelConfig(), TrainConfig()
    for field in ("emb_dim", "blocks", "dropout", "beta", "max_code_len",
                  "max_query_len", "max_nodes", "ast_weight", "dfg_weight"):
        assert getattr(mc, field) == getattr(ref_m, field), field
    for field in ("batch_size", "epochs", "lr", "beta", "dropout", "clip_norm",
                  "adam_beta1", "adam_beta2", "adam_eps"):
        assert getattr(tc, field) == getattr(ref_t, field), field


# ---------------------------------------------------------------------------
# overfit-then-search integration

@pytest.mark.slow
def test_overfit_then_search_finds_gold_first(tmp_path, capsys):
    """A file-writing snippet trained into a tiny index must come back first."""
    gold = {
        "id": "gold-write-string",
        "code": (
            "public void writeStringToFile(String text, String path) { "
            "FileWriter writer = new FileWriter(path); "
            "writer.write(text); writer.close(); }"
        ),
        "docstring": "save string into the file",
        "lang": "java",
    }
    others = generate_pairs(7, seed=4)
    corpus = tmp_path / "corpus.jsonl"
    with open(corpus, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(gold) + "\n")
        for p in others:
            fh.write(json.dumps(
                {"id": p.id, "code": p.code, "docstring": p.docstring, "lang": p.lang}
            ) + "\n")

    wd = tmp_path / "wd"
    base = [
        "--corpus", str(corpus), "--workdir", str(wd),
        "--emb-dim", "24", "--hidden", "24", "--blocks", "1",
        "--max-code-len", "60", "--max-query-len", "12", "--max-nodes", "40",
        "--epochs", "30", "--batch-size", "4", "--lr", "3e-3", "--dropout", "0.0",
        "--pretrain-epochs", "10", "--walks-per-node", "2", "--walk-length", "6",
        "--seed", "5", "--threads", "1",
    ]
    for cmd in ("ingest", "graphs", "pretrain", "train"):
        assert main([cmd, *base]) == EXIT_OK, f"{cmd} failed"
    capsys.readouterr()

    assert main(["search", "save string into the file", "--k", "3", *base]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out.strip())
    assert doc["results"][0]["id"] == "gold-write-string"


@pytest.mark.slow
def test_ablate_writes_five_rows(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    write_jsonl(generate_pairs(12, seed=6), corpus)
    wd = tmp_path / "wd"
    base = ["--corpus", str(corpus), "--workdir", str(wd), *SMALL_FLAGS,
            "--holdout", "0.25"]
    assert main(["ingest", *base]) == EXIT_OK
    assert main(["ablate", *base]) == EXIT_OK
    report = json.loads((wd / "ablation_report.json").read_text())
    labels = [row["model"] for row in report["rows"]]
    assert labels == ["Base", "Base+CSRG", "Base+CRESS", "Base+CRESS+CSRG",
                      "Base+CRESS+CSRG+Attn"]
    out = capsys.readouterr().out
    assert "Model" in out and "MRR" in out
