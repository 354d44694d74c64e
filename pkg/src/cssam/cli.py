"""Operator entry point: ingest -> graphs -> pretrain -> train -> search/eval/ablate.

Every stage reads and writes plain files under a working directory so runs are
inspectable and repeatable: a tokenized dataset (JSON lines), vocab files,
serialized snippet graphs, embedding tables, one checkpoint, and JSON reports.
Settings merge as flags > config file > built-in defaults; ``CSSAM_WORKDIR``
overrides the working directory unless a flag does.

Heavy imports (numpy and every module that uses it) happen lazily inside the
command handlers so ``--threads`` can pin BLAS thread counts first.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

from .errors import (
    CheckpointError,
    ConfigError,
    CorpusError,
    CssamError,
    EvalError,
    GraphError,
    ParseError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4
EXIT_INTERNAL = 5

WORKDIR_ENV = "CSSAM_WORKDIR"

DATASET_FILE = "dataset.jsonl"
VOCAB_CODE_FILE = "vocab_code.json"
VOCAB_QUERY_FILE = "vocab_query.json"
INGEST_SUMMARY_FILE = "ingest_summary.json"
GRAPHS_FILE = "graphs.jsonl"
GRAPH_STATS_FILE = "graph_stats.json"
EMB_CODE_PREFIX = "emb_code"
EMB_QUERY_PREFIX = "emb_query"
EMB_NODES_PREFIX = "emb_nodes"
CHECKPOINT_FILE = "checkpoint.json"
TRAIN_LOG_FILE = "train_log.jsonl"
EVAL_REPORT_FILE = "eval_report.json"
ABLATION_REPORT_FILE = "ablation_report.json"

_BLAS_ENV_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_EVAL_MODES = ("exhaustive", "two_stage")


@dataclass
class RunConfig:
    """One flat bag of settings for every pipeline stage.

    Defaults mirror the trained setup; ``model_config``/``train_config``
    project the relevant slices onto the module-level config types (a parity
    test keeps the duplicated defaults honest).
    """

    # paths
    corpus: str | None = None
    workdir: str = "workdir"
    checkpoint: str | None = None
    # optimization
    batch_size: int = 32
    epochs: int = 100
    lr: float = 1e-4
    beta: float = 0.05
    dropout: float = 0.2
    clip_norm: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int | None = None
    # model
    emb_dim: int = 300
    hidden: int = 256
    blocks: int = 4
    max_code_len: int = 200
    max_query_len: int = 30
    use_cress: bool = True
    use_csrg: bool = True
    use_attention: bool = True
    # graph construction
    max_nodes: int = 80
    ast_weight: float = 0.4
    dfg_weight: float = 0.6
    # embedding pretraining
    pretrain_epochs: int = 5
    pretrain_lr: float = 0.025
    pretrain_window: int = 5
    pretrain_negatives: int = 5
    walks_per_node: int = 10
    walk_length: int = 20
    # evaluation
    pool_size: int | None = 1000
    eval_ks: tuple[int, int, int] = (1, 5, 10)
    ndcg_k: int = 50
    mode: str = "exhaustive"
    top_n: int = 100
    holdout: float = 0.1
    # global
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.pool_size == 0:
            self.pool_size = None
        if self.patience == 0:
            self.patience = None
        if isinstance(self.eval_ks, list):
            self.eval_ks = tuple(self.eval_ks)
        for name in ("batch_size", "epochs", "emb_dim", "hidden", "blocks",
                     "max_code_len", "max_query_len", "max_nodes",
                     "pretrain_epochs", "pretrain_window", "pretrain_negatives",
                     "walks_per_node", "walk_length", "ndcg_k", "top_n", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        for name in ("lr", "beta", "clip_norm", "adam_eps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.ast_weight <= 0 or self.dfg_weight <= 0:
            raise ConfigError("edge weights must be positive")
        if self.pretrain_lr <= 0:
            raise ConfigError("pretrain_lr must be positive")
        if self.pool_size is not None and self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1 (or 0/null for the full corpus)")
        ks = self.eval_ks
        if len(ks) != 3 or any(k < 1 for k in ks) or list(ks) != sorted(set(ks)):
            raise ConfigError("eval_ks must be three distinct ascending positive ints")
        if self.mode not in _EVAL_MODES:
            raise ConfigError(f"mode must be one of {_EVAL_MODES}")
        if not 0.0 < self.holdout < 1.0:
            raise ConfigError("holdout must be in (0, 1)")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 (or 0/null to disable)")

    @classmethod
    def from_sources(cls, file_data: dict, flag_data: dict) -> "RunConfig":
        known = {f.name for f in dc_fields(cls)}
        unknown = set(file_data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(file_data)
        merged.update({k: v for k, v in flag_data.items() if v is not None})
        if "workdir" not in merged and os.environ.get(WORKDIR_ENV):
            merged["workdir"] = os.environ[WORKDIR_ENV]
        return cls(**merged)

    def model_config(self):
        from .model import ModelConfig

        return ModelConfig(
            emb_dim=self.emb_dim,
            hidden=self.hidden,
            gat_dim=self.hidden,
            cress_enc_dim=self.hidden,
            cress_out_dim=self.hidden,
            d_m=self.hidden,
            blocks=self.blocks,
            dropout=self.dropout,
            use_csrg=self.use_csrg,
            use_cress=self.use_cress,
            use_attention=self.use_attention,
            max_code_len=self.max_code_len,
            max_query_len=self.max_query_len,
            max_nodes=self.max_nodes,
            ast_weight=self.ast_weight,
            dfg_weight=self.dfg_weight,
            beta=self.beta,
        )

    def train_config(self):
        from .train import TrainConfig

        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            beta=self.beta,
            dropout=self.dropout,
            max_code_len=self.max_code_len,
            max_query_len=self.max_query_len,
            max_nodes=self.max_nodes,
            seed=self.seed,
            clip_norm=self.clip_norm,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            patience=self.patience,
        )

    def workdir_path(self) -> Path:
        return Path(self.workdir)

    def checkpoint_path(self) -> Path:
        if self.checkpoint:
            return Path(self.checkpoint)
        return self.workdir_path() / CHECKPOINT_FILE


# ---------------------------------------------------------------------------
# Argument parsing


def _ks_arg(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}: {exc}") from exc


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("pipeline settings (override config file)")
    g.add_argument("--config", metavar="PATH", help="JSON config file")
    g.add_argument("--corpus", metavar="PATH", help="JSON-lines corpus of code/docstring pairs")
    g.add_argument("--workdir", metavar="DIR", help=f"working directory (default 'workdir'; ${WORKDIR_ENV} overrides)")
    g.add_argument("--checkpoint", metavar="PATH", help="checkpoint manifest path (default <workdir>/checkpoint.json)")
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--beta", type=float, help="ranking margin")
    g.add_argument("--dropout", type=float)
    g.add_argument("--clip-norm", dest="clip_norm", type=float)
    g.add_argument("--adam-beta1", dest="adam_beta1", type=float)
    g.add_argument("--adam-beta2", dest="adam_beta2", type=float)
    g.add_argument("--adam-eps", dest="adam_eps", type=float)
    g.add_argument("--patience", type=int, help="early-stop patience in epochs (0 disables)")
    g.add_argument("--emb-dim", dest="emb_dim", type=int)
    g.add_argument("--hidden", type=int, help="width of every hidden layer")
    g.add_argument("--blocks", type=int, help="number of residual matching blocks")
    g.add_argument("--max-code-len", dest="max_code_len", type=int)
    g.add_argument("--max-query-len", dest="max_query_len", type=int)
    g.add_argument("--use-cress", dest="use_cress", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--use-csrg", dest="use_csrg", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--use-attention", dest="use_attention", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--max-nodes", dest="max_nodes", type=int, help="graph size cap")
    g.add_argument("--ast-weight", dest="ast_weight", type=float)
    g.add_argument("--dfg-weight", dest="dfg_weight", type=float)
    g.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    g.add_argument("--pretrain-lr", dest="pretrain_lr", type=float)
    g.add_argument("--pretrain-window", dest="pretrain_window", type=int)
    g.add_argument("--pretrain-negatives", dest="pretrain_negatives", type=int)
    g.add_argument("--walks-per-node", dest="walks_per_node", type=int)
    g.add_argument("--walk-length", dest="walk_length", type=int)
    g.add_argument("--pool-size", dest="pool_size", type=int, help="distractor pool per query (0 = full corpus)")
    g.add_argument("--ks", dest="eval_ks", type=_ks_arg, metavar="K1,K2,K3", help="success-rate cutoffs")
    g.add_argument("--ndcg-k", dest="ndcg_k", type=int)
    g.add_argument("--mode", choices=_EVAL_MODES, help="ranking mode")
    g.add_argument("--top-n", dest="top_n", type=int, help="candidates re-scored in two_stage mode")
    g.add_argument("--holdout", type=float, help="test fraction for ablate")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="BLAS thread cap (1 = fully deterministic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cssam",
        description="Graph-augmented neural code search: build, train, query, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    commands = {
        "ingest": "tokenize a corpus into a dataset plus vocab files",
        "graphs": "build and serialize a snippet graph per dataset record",
        "pretrain": "pretrain token and graph-node embedding tables",
        "train": "train the matcher and write a checkpoint",
        "search": "rank the indexed corpus for one query or stdin lines",
        "eval": "rank every dataset query and report retrieval metrics",
        "ablate": "train one model per branch-switch row and tabulate metrics",
    }
    parsers = {}
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_run_flags(p)
        parsers[name] = p

    parsers["search"].add_argument("query", nargs="?", help="query text (omit to read lines from stdin)")
    parsers["search"].add_argument("--k", type=int, default=10, help="results per query (default 10)")
    parsers["search"].add_argument("--text", action="store_true", help="human-readable output instead of JSON")
    parsers["eval"].add_argument("--test", metavar="PATH", help="held-out corpus file (default: the ingested dataset)")
    parsers["eval"].add_argument(
        "--scorer", choices=("model", "random", "oracle"), default="model",
        help="ranking function: the trained model, a seeded random baseline, or a gold-first oracle",
    )
    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    file_data: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
    run_fields = {f.name for f in dc_fields(RunConfig)}
    flag_data = {k: v for k, v in vars(args).items() if k in run_fields}
    return RunConfig.from_sources(file_data, flag_data)


def _apply_thread_env(threads: int) -> None:
    for var in _BLAS_ENV_VARS:
        os.environ[var] = str(threads)


# ---------------------------------------------------------------------------
# Shared helpers


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise CorpusError(f"{path} not found; {hint}")
    return path


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_dataset(workdir: Path):
    from .corpus import CodeDocPair

    path = _require(workdir / DATASET_FILE, "run `cssam ingest` first")
    pairs = []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            records.append(rec)
            pairs.append(CodeDocPair(rec["id"], rec["code"], rec["docstring"], rec["lang"]))
    if not pairs:
        raise CorpusError(f"{path} holds no records; re-run `cssam ingest`")
    return pairs, records


def _parseable_pairs(pairs, model_cfg):
    """Drop pairs whose code will not parse when the graph branch is on."""
    if not model_cfg.use_csrg:
        return list(pairs), []
    from .parsers import parse_ast

    kept, skipped = [], []
    for pair in pairs:
        try:
            parse_ast(pair.code, pair.lang)
        except ParseError as exc:
            skipped.append(pair.id)
            print(f"skipping {pair.id}: {exc}", file=sys.stderr)
        else:
            kept.append(pair)
    if not kept:
        raise CorpusError("no snippet in the dataset parses; cannot continue")
    return kept, skipped


def _collect_node_keys(samples) -> list[str]:
    keys: list[str] = []
    seen: set[str] = set()
    for sample in samples:
        if sample.graph is None:
            continue
        for key in sample.graph.key_strings():
            if key not in seen:
                seen.add(key)
                keys.append(key)
    return keys


def _load_params(cfg: RunConfig):
    from .train import load_checkpoint

    path = cfg.checkpoint_path()
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}; run `cssam train` first")
    return load_checkpoint(path)


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .corpus import build_vocab, load_pairs_with_stats, tokenize_code, tokenize_query

    if not cfg.corpus:
        raise ConfigError("ingest needs --corpus (or a corpus path in the config file)")
    corpus_path = Path(cfg.corpus)
    if not corpus_path.exists():
        raise CorpusError(f"corpus file not found: {corpus_path}")

    pairs, stats = load_pairs_with_stats(corpus_path)
    if not pairs:
        raise CorpusError(f"{corpus_path} yields no usable pairs")
    code_vocab, query_vocab = build_vocab(pairs)

    workdir = cfg.workdir_path()
    workdir.mkdir(parents=True, exist_ok=True)
    with open(workdir / DATASET_FILE, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(
                {
                    "code": pair.code,
                    "code_tokens": list(tokenize_code(pair.code).tokens),
                    "docstring": pair.docstring,
                    "id": pair.id,
                    "lang": pair.lang,
                    "query_tokens": list(tokenize_query(pair.docstring).tokens),
                },
                sort_keys=True,
                ensure_ascii=False,
            ) + "\n")
    (workdir / VOCAB_CODE_FILE).write_text(code_vocab.to_json(), encoding="utf-8")
    (workdir / VOCAB_QUERY_FILE).write_text(query_vocab.to_json(), encoding="utf-8")
    summary = {
        "pairs": stats.kept,
        "dropped_short_doc": stats.dropped_short_doc,
        "dropped_empty_code": stats.dropped_empty_code,
        "total_lines": stats.total_lines,
        "code_vocab": len(code_vocab),
        "query_vocab": len(query_vocab),
    }
    _write_json(workdir / INGEST_SUMMARY_FILE, summary)
    print(f"ingested {stats.kept} pairs "
          f"(dropped {stats.dropped_short_doc} short-doc, {stats.dropped_empty_code} empty-code) "
          f"-> {workdir / DATASET_FILE}")
    return EXIT_OK


def cmd_graphs(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .graph import build_csrg, csrg_stats, extract_dfg, truncate_csrg
    from .parsers import parse_ast

    workdir = cfg.workdir_path()
    pairs, _ = _read_dataset(workdir)

    graphs, asts, skipped = [], [], []
    with open(workdir / GRAPHS_FILE, "w", encoding="utf-8") as fh:
        for pair in pairs:
            try:
                ast = parse_ast(pair.code, pair.lang)
            except ParseError as exc:
                skipped.append(pair.id)
                print(f"skipping {pair.id}: {exc}", file=sys.stderr)
                continue
            graph = truncate_csrg(
                build_csrg(ast, extract_dfg(ast), cfg.ast_weight, cfg.dfg_weight),
                cfg.max_nodes,
            )
            graphs.append(graph)
            asts.append(ast)
            fh.write(json.dumps(
                {"graph": graph.to_json_dict(), "id": pair.id}, sort_keys=True,
            ) + "\n")
    if not graphs:
        raise GraphError("no snippet in the dataset parses; nothing to build")

    stats = csrg_stats(graphs, asts).as_dict()
    stats["skipped"] = len(skipped)
    stats["skipped_ids"] = skipped
    _write_json(workdir / GRAPH_STATS_FILE, stats)
    print(f"built {len(graphs)} graphs (skipped {len(skipped)}); "
          f"mean nodes {stats['mean_csrg_nodes']:.1f} vs {stats['mean_ast_nodes']:.1f} in the syntax tree "
          f"({stats['mean_reduction']:.0%} reduction)")
    return EXIT_OK


def cmd_pretrain(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .graph import Csrg
    from .pretrain import random_walks, train_node_embeddings, train_token_embeddings

    workdir = cfg.workdir_path()
    _, records = _read_dataset(workdir)

    code_corpus = [rec["code_tokens"] for rec in records]
    query_corpus = [rec["query_tokens"] for rec in records]
    common = dict(
        dim=cfg.emb_dim,
        window=cfg.pretrain_window,
        negatives=cfg.pretrain_negatives,
        epochs=cfg.pretrain_epochs,
        lr=cfg.pretrain_lr,
    )
    code_table = train_token_embeddings(code_corpus, seed=cfg.seed, **common)
    code_table.save(workdir / EMB_CODE_PREFIX)
    query_table = train_token_embeddings(query_corpus, seed=cfg.seed + 1, **common)
    query_table.save(workdir / EMB_QUERY_PREFIX)
    summary = f"pretrained embeddings: {len(code_table)} code tokens, {len(query_table)} query tokens"

    if cfg.use_csrg:
        graphs_path = _require(workdir / GRAPHS_FILE, "run `cssam graphs` first")
        sequences: list[list[str]] = []
        with open(graphs_path, encoding="utf-8") as fh:
            for idx, line in enumerate(fh):
                if not line.strip():
                    continue
                graph = Csrg.from_json_dict(json.loads(line)["graph"])
                keys = graph.key_strings()
                walks = random_walks(
                    graph, gamma=cfg.walks_per_node, t=cfg.walk_length, seed=cfg.seed + idx,
                )
                sequences.extend([keys[i] for i in walk] for walk in walks.walks)
        node_table = train_node_embeddings(sequences, seed=cfg.seed + 2, **common)
        node_table.save(workdir / EMB_NODES_PREFIX)
        summary += f", {len(node_table)} graph nodes"
    print(summary)
    return EXIT_OK


def _build_initial_params(cfg: RunConfig, model_cfg, pairs):
    """Wrap pretrained tables when present, else start from random weights."""
    from .model import ModelParams
    from .pretrain import EmbeddingTable
    from .train import prepare_examples

    workdir = cfg.workdir_path()
    examples = prepare_examples(pairs, model_cfg)
    code_prefix = workdir / EMB_CODE_PREFIX
    if code_prefix.with_suffix(".json").exists():
        code_table = EmbeddingTable.load(code_prefix)
        query_table = EmbeddingTable.load(workdir / EMB_QUERY_PREFIX)
        node_table = None
        if model_cfg.use_csrg and (workdir / EMB_NODES_PREFIX).with_suffix(".json").exists():
            node_table = EmbeddingTable.load(workdir / EMB_NODES_PREFIX)
        params = ModelParams.from_pretrained(
            model_cfg, code_table, query_table, node_table, seed=cfg.seed,
        )
        origin = "pretrained embeddings"
    else:
        from .corpus import build_vocab

        code_vocab, query_vocab = build_vocab(pairs)
        node_keys = _collect_node_keys(ex.code for ex in examples)
        params = ModelParams.create(
            model_cfg, code_vocab, query_vocab, node_keys, seed=cfg.seed,
        )
        origin = "random init"
    return params, examples, origin


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .train import AdamState, fit, save_checkpoint

    workdir = cfg.workdir_path()
    pairs, _ = _read_dataset(workdir)
    model_cfg = cfg.model_config()
    train_cfg = cfg.train_config()

    pairs, skipped = _parseable_pairs(pairs, model_cfg)
    params, examples, origin = _build_initial_params(cfg, model_cfg, pairs)
    opt_state = AdamState.create(params, train_cfg)

    print(f"training on {len(examples)} pairs ({origin}, {len(skipped)} skipped)")
    with open(workdir / TRAIN_LOG_FILE, "w", encoding="utf-8") as log:
        history = fit(examples, params, train_cfg, opt_state=opt_state, log_stream=log)
    for stats in history:
        print(stats.to_json())

    ckpt_path = cfg.checkpoint_path()
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, opt_state, train_cfg, ckpt_path)
    final = history[-1].mean_loss if history else float("nan")
    print(f"saved checkpoint to {ckpt_path} (final mean loss {final:.4f})")
    return EXIT_OK


def cmd_search(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .retrieval import prepare_pool, search

    params, _, _ = _load_params(cfg)
    pairs, _ = _read_dataset(cfg.workdir_path())
    pairs, _ = _parseable_pairs(pairs, params.config)
    pool = prepare_pool(pairs, params)

    if args.query is not None:
        queries = [args.query]
    else:
        if sys.stdin.isatty():
            print("reading queries from stdin, one per line (ctrl-d to stop)", file=sys.stderr)
        queries = (line.strip() for line in sys.stdin)

    for query in queries:
        if not query:
            continue
        doc = search(query, pool, params, k=args.k, mode=cfg.mode, top_n=cfg.top_n)
        if args.text:
            print(f"query: {doc['query']}")
            for rank, row in enumerate(doc["results"], start=1):
                preview = " ".join(row["snippet_preview"].split())
                print(f"  {rank:2d}. {row['id']}  {row['score']:+.4f}  {preview}")
        else:
            print(json.dumps(doc, sort_keys=True, ensure_ascii=False))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .evaluation import evaluate, render_table

    if args.scorer == "model":
        params, _, _ = _load_params(cfg)
        model_cfg = params.config
    else:
        params, model_cfg = None, cfg.model_config()

    if args.test:
        from .corpus import load_pairs

        test_path = Path(args.test)
        if not test_path.exists():
            raise CorpusError(f"test corpus not found: {test_path}")
        pairs = load_pairs(test_path)
    else:
        pairs, _ = _read_dataset(cfg.workdir_path())
    if args.scorer == "model":
        pairs, _ = _parseable_pairs(pairs, model_cfg)

    report = evaluate(
        params,
        pairs,
        pool_size=cfg.pool_size,
        mode=cfg.mode,
        top_n=cfg.top_n,
        seed=cfg.seed,
        scorer=args.scorer,
        ks=cfg.eval_ks,
        ndcg_k=cfg.ndcg_k,
    )
    out_path = cfg.workdir_path() / EVAL_REPORT_FILE
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json() + "\n", encoding="utf-8")
    print(render_table([(args.scorer, report)]))
    print(f"report written to {out_path}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .corpus import build_vocab
    from .evaluation import ABLATION_VARIANTS, ablation_run, render_table
    from .model import ModelParams
    from .train import prepare_examples

    pairs, _ = _read_dataset(cfg.workdir_path())
    model_cfg = cfg.model_config()
    pairs, _ = _parseable_pairs(pairs, model_cfg)
    if len(pairs) < 4:
        raise EvalError("ablation needs at least 4 usable pairs")

    import numpy as np

    order = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, 0xAB])).permutation(len(pairs))
    n_test = max(1, int(round(len(pairs) * cfg.holdout)))
    test_pairs = [pairs[i] for i in order[:n_test]]
    train_pairs = [pairs[i] for i in order[n_test:]]

    code_vocab, query_vocab = build_vocab(pairs)
    node_keys = _collect_node_keys(
        ex.code for ex in prepare_examples(train_pairs, model_cfg)
    )

    def build_params(variant_cfg, seed):
        return ModelParams.create(variant_cfg, code_vocab, query_vocab, node_keys, seed=seed)

    rows = ablation_run(
        ABLATION_VARIANTS,
        train_pairs,
        test_pairs,
        model_cfg,
        cfg.train_config(),
        build_params,
        pool_size=cfg.pool_size,
        mode=cfg.mode,
        top_n=cfg.top_n,
        seed=cfg.seed,
    )
    out_path = cfg.workdir_path() / ABLATION_REPORT_FILE
    _write_json(out_path, {"rows": [{"model": label, **report.to_dict()} for label, report in rows]})
    print(render_table(rows))
    print(f"report written to {out_path}")
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "graphs": cmd_graphs,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "search": cmd_search,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        _apply_thread_env(cfg.threads)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, ParseError, GraphError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CssamError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
