"""Retrieval metrics and the evaluation/ablation harness.

Metrics follow the usual single-relevant-item definitions: MRR is the mean
reciprocal rank, SR@k the fraction of queries whose gold item lands in the
top k, and NDCG@k the log-discounted gain — with binary relevance and one
relevant item the ideal DCG is 1, so DCG and NDCG coincide.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import CodeDocPair, tokenize_query
from .errors import ConfigError, EvalError
from .model import ModelConfig, ModelParams
from .retrieval import (
    DEFAULT_TOP_N,
    PoolCandidate,
    RankedResult,
    prepare_pool,
    score_all,
)
from .train import TrainConfig, fit, prepare_examples

DEFAULT_POOL_SIZE = 1000

# Ablation rows: label -> (use_cress, use_csrg, use_attention)
ABLATION_VARIANTS: tuple[tuple[str, dict], ...] = (
    ("Base", {"use_cress": False, "use_csrg": False, "use_attention": False}),
    ("Base+CSRG", {"use_cress": False, "use_csrg": True, "use_attention": False}),
    ("Base+CRESS", {"use_cress": True, "use_csrg": False, "use_attention": False}),
    ("Base+CRESS+CSRG", {"use_cress": True, "use_csrg": True, "use_attention": False}),
    ("Base+CRESS+CSRG+Attn", {"use_cress": True, "use_csrg": True, "use_attention": True}),
)


@dataclass
class EvalRecord:
    """Outcome of one query: where its gold candidate ranked, if at all."""

    query_id: str
    frank: int | None
    pool_size: int

    def __post_init__(self):
        if self.pool_size < 1:
            raise EvalError("pool_size must be >= 1")
        if self.frank is not None and not 1 <= self.frank <= self.pool_size:
            raise EvalError(
                f"frank {self.frank} outside 1..{self.pool_size} for query {self.query_id!r}"
            )


def _check_records(records: Sequence[EvalRecord]) -> None:
    if not records:
        raise EvalError("no evaluation records")


def mrr(records: Sequence[EvalRecord]) -> float:
    """Mean reciprocal rank; a missing gold item contributes 0."""
    _check_records(records)
    return sum(1.0 / r.frank for r in records if r.frank is not None) / len(records)


def success_rate_at_k(records: Sequence[EvalRecord], k: int) -> float:
    """Fraction of queries whose gold item appears in the top k."""
    _check_records(records)
    if k < 1:
        raise ConfigError("k must be >= 1")
    hits = sum(1 for r in records if r.frank is not None and r.frank <= k)
    return hits / len(records)


def ndcg_at_k(records: Sequence[EvalRecord], k: int) -> float:
    """Mean per-query gain 1/log2(frank+1) for franks within the cutoff."""
    _check_records(records)
    if k < 1:
        raise ConfigError("k must be >= 1")
    total = sum(
        1.0 / math.log2(r.frank + 1)
        for r in records
        if r.frank is not None and r.frank <= k
    )
    return total / len(records)


@dataclass
class EvalReport:
    """Aggregated metrics plus enough context to reproduce the run."""

    sr1: float
    sr5: float
    sr10: float
    mrr: float
    ndcg50: float
    query_count: int
    pool_size: int
    pool_mode: str          # "sampled" or "full"
    scorer: str             # "model", "random", or "oracle"
    mode: str               # retrieval mode used by the model scorer
    seed: int
    build_id: str
    config: dict = field(default_factory=dict)

    def metrics(self) -> dict[str, float]:
        return {
            "SR@1": self.sr1,
            "SR@5": self.sr5,
            "SR@10": self.sr10,
            "MRR": self.mrr,
            "NDCG@50": self.ndcg50,
        }

    def to_dict(self) -> dict:
        return {
            "metrics": self.metrics(),
            "query_count": self.query_count,
            "pool_size": self.pool_size,
            "pool_mode": self.pool_mode,
            "scorer": self.scorer,
            "mode": self.mode,
            "seed": self.seed,
            "build_id": self.build_id,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def render_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    """Aligned text table in the standard column order."""
    headers = ["Model", "SR@1", "SR@5", "SR@10", "MRR", "NDCG@50"]
    body = [
        [label] + [f"{value:.4f}" for value in report.metrics().values()]
        for label, report in rows
    ]
    widths = [max(len(row[i]) for row in [headers] + body) for i in range(len(headers))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def params_build_id(params: ModelParams) -> str:
    """Short content hash over every named tensor, in name order."""
    digest = hashlib.sha1()
    for name, tensor in params.named():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    return digest.hexdigest()[:12]


def _random_result(
    ids: list[str], rng: np.random.Generator, query_id: str, gold_id: str
) -> RankedResult:
    scores = rng.random(len(ids))
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    ranking = [(ids[i], float(scores[i])) for i in order]
    frank = next(i for i, (cid, _) in enumerate(ranking, start=1) if cid == gold_id)
    return RankedResult(query_id=query_id, ranking=ranking, frank=frank)


def _oracle_result(ids: list[str], query_id: str, gold_id: str) -> RankedResult:
    ranking = [(gold_id, 1.0)] + [(cid, 0.0) for cid in sorted(ids) if cid != gold_id]
    return RankedResult(query_id=query_id, ranking=ranking, frank=1)


def evaluate(
    params: ModelParams | None,
    test_pairs: Sequence[CodeDocPair],
    pool_size: int | None = DEFAULT_POOL_SIZE,
    mode: str = "exhaustive",
    top_n: int = DEFAULT_TOP_N,
    seed: int = 0,
    scorer: str = "model",
    ks: tuple[int, int, int] = (1, 5, 10),
    ndcg_k: int = 50,
    build_id: str | None = None,
    pool: Sequence[PoolCandidate] | None = None,
) -> EvalReport:
    """Rank every test query against gold + seeded distractors and aggregate.

    ``pool_size`` of None (or the full test size) ranks against the whole
    test set; otherwise each query gets its gold snippet plus pool_size − 1
    distractors drawn without replacement, seeded per query.
    """
    if not test_pairs:
        raise EvalError("no test pairs to evaluate")
    ids = [p.id for p in test_pairs]
    if len(set(ids)) != len(ids):
        raise EvalError("test pair ids must be unique")
    if scorer not in ("model", "random", "oracle"):
        raise ConfigError(f"unknown scorer {scorer!r}")
    n = len(test_pairs)
    full = pool_size is None or pool_size >= n
    size = n if full else pool_size
    if size is not None and size < 1:
        raise ConfigError("pool_size must be >= 1")
    if not full and pool_size > n:  # pragma: no cover - guarded by `full`
        raise EvalError("pool_size exceeds the number of test pairs")

    if scorer == "model":
        if params is None:
            raise ConfigError("the model scorer needs model parameters")
        if pool is None:
            pool = prepare_pool(test_pairs, params)
        if len(pool) != n:
            raise EvalError("prepared pool does not match the test pairs")
    queries = [tokenize_query(p.docstring) for p in test_pairs]

    records: list[EvalRecord] = []
    for qi, pair in enumerate(test_pairs):
        if full:
            chosen = list(range(n))
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, qi]))
            others = np.setdiff1d(np.arange(n), [qi])
            distractors = rng.choice(others, size=size - 1, replace=False)
            chosen = [qi] + [int(i) for i in distractors]
        chosen_ids = [ids[i] for i in chosen]

        if scorer == "random":
            rng_s = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, qi, 1]))
            result = _random_result(chosen_ids, rng_s, pair.id, pair.id)
        elif scorer == "oracle":
            result = _oracle_result(chosen_ids, pair.id, pair.id)
        else:
            assert pool is not None
            subset = [pool[i] for i in chosen]
            result = score_all(
                queries[qi], subset, params, mode=mode, top_n=top_n,
                query_id=pair.id, gold_id=pair.id,
            )
        records.append(EvalRecord(query_id=pair.id, frank=result.frank, pool_size=size))

    if build_id is None:
        build_id = params_build_id(params) if params is not None else "none"
    return EvalReport(
        sr1=success_rate_at_k(records, ks[0]),
        sr5=success_rate_at_k(records, ks[1]),
        sr10=success_rate_at_k(records, ks[2]),
        mrr=mrr(records),
        ndcg50=ndcg_at_k(records, ndcg_k),
        query_count=len(records),
        pool_size=size,
        pool_mode="full" if full else "sampled",
        scorer=scorer,
        mode=mode,
        seed=seed,
        build_id=build_id,
        config=params.config.to_dict() if params is not None else {},
    )


def ablation_run(
    variants: Sequence[tuple[str, dict]],
    train_pairs: Sequence[CodeDocPair],
    test_pairs: Sequence[CodeDocPair],
    base_model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    build_params: Callable[[ModelConfig, int], ModelParams],
    pool_size: int | None = None,
    mode: str = "exhaustive",
    top_n: int = DEFAULT_TOP_N,
    seed: int = 0,
) -> list[tuple[str, EvalReport]]:
    """Train and evaluate one model per branch-switch set, same data and seed.

    ``build_params`` constructs fresh parameters for a variant config (it
    owns vocabularies and any pretrained tables).
    """
    rows: list[tuple[str, EvalReport]] = []
    for label, switches in variants:
        unknown = set(switches) - {"use_cress", "use_csrg", "use_attention"}
        if unknown:
            raise ConfigError(f"unknown ablation switches for {label!r}: {sorted(unknown)}")
        cfg = ModelConfig.from_dict({**base_model_cfg.to_dict(), **switches})
        params = build_params(cfg, seed)
        dataset = prepare_examples(train_pairs, cfg)
        fit(dataset, params, train_cfg)
        report = evaluate(
            params, test_pairs, pool_size=pool_size, mode=mode, top_n=top_n, seed=seed
        )
        rows.append((label, report))
    return rows
