"""Online search: score a query against a candidate pool and rank.

Exhaustive mode runs the full pair encoder on every (query, candidate)
combination — the ground-truth ranking for a pairing-conditioned model.
Two-stage mode first ranks the whole pool by the pairing-independent
branches (graph vector vs. LSTM query vector), then re-scores only the
top ``top_n`` with the full model and returns that re-scored set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import nn
from .corpus import CodeDocPair, TokenSequence, tokenize_query
from .errors import ConfigError, ModelError
from .model import (
    CodeSample,
    ModelParams,
    code_sample,
    collate_codes,
    collate_queries,
    encode_batch,
)

DEFAULT_TOP_N = 100
_SCORE_CHUNK = 128
PREVIEW_CHARS = 200


@dataclass
class PoolCandidate:
    """One searchable snippet: stable id, raw source, prepared inputs."""

    id: str
    source: str
    sample: CodeSample


def prepare_pool(pairs: Sequence[CodeDocPair], params: ModelParams) -> list[PoolCandidate]:
    """Parse and tokenize every candidate once."""
    return [
        PoolCandidate(p.id, p.code, code_sample(p.code, p.lang, params.config))
        for p in pairs
    ]


@dataclass
class RankedResult:
    """Scored pool ordering for one query.

    ``frank`` is the 1-based rank of the gold candidate, or None when the
    gold id was not scored (absent from the pool, or dropped by the
    two-stage cutoff).
    """

    query_id: str
    ranking: list[tuple[str, float]]
    frank: int | None = None

    def __post_init__(self):
        scores = [s for _, s in self.ranking]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ModelError("ranking scores must be non-increasing")
        if self.frank is not None and self.frank < 1:
            raise ModelError("frank must be >= 1 when present")


def _rank(ids: list[str], scores: np.ndarray, query_id: str, gold_id: str | None) -> RankedResult:
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    ranking = [(ids[i], float(scores[i])) for i in order]
    frank = None
    if gold_id is not None:
        for pos, (cid, _) in enumerate(ranking, start=1):
            if cid == gold_id:
                frank = pos
                break
    return RankedResult(query_id=query_id, ranking=ranking, frank=frank)


def _full_scores(
    query: TokenSequence, pool: Sequence[PoolCandidate], params: ModelParams
) -> np.ndarray:
    """Cosine of the fused vectors for every candidate, in pool order."""
    qb1 = collate_queries([query], params)
    scores = np.empty(len(pool), dtype=np.float64)
    for start in range(0, len(pool), _SCORE_CHUNK):
        chunk = pool[start : start + _SCORE_CHUNK]
        codes = collate_codes([c.sample for c in chunk], params)
        queries = qb1.tile(len(chunk))
        x_code, x_docs = encode_batch(codes, queries, params)
        a, b = x_code.data, x_docs.data
        norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        if np.any(norms == 0.0):
            raise ModelError("cosine similarity of a zero vector is undefined")
        scores[start : start + len(chunk)] = np.sum(a * b, axis=1) / norms
    return scores


def _first_stage_scores(
    query: TokenSequence, pool: Sequence[PoolCandidate], params: ModelParams
) -> np.ndarray:
    """Pairing-independent scores: graph branch vs. LSTM query branch.

    Without the graph branch there is no pairing-independent model vector,
    so the fallback compares mean-pooled raw token embeddings directly.
    """
    cfg = params.config
    qb = collate_queries([query], params)
    if cfg.use_csrg:
        q_emb = ad.reshape(
            ad.gather_rows(params.emb_query, qb.ids.reshape(-1)),
            (1, qb.ids.shape[1], cfg.emb_dim),
        )
        lstm_seq = nn.lstm_encode(q_emb, qb.mask, params.lstm)
        if params.pool_docs_lstm is not None:
            v_q = nn.attention_pool(lstm_seq, qb.mask, params.pool_docs_lstm)
        else:
            v_q = nn.masked_mean_pool(lstm_seq, qb.mask)
        q_vec = params.proj_docs_lstm.apply(v_q).data[0]

        scores = np.empty(len(pool), dtype=np.float64)
        for start in range(0, len(pool), _SCORE_CHUNK):
            chunk = pool[start : start + _SCORE_CHUNK]
            codes = collate_codes([c.sample for c in chunk], params)
            assert params.emb_nodes is not None and params.proj_gat is not None
            n = codes.node_key_ids.shape[0]
            k = cfg.max_label_tokens
            lab = ad.reshape(
                ad.gather_rows(params.emb_code, codes.node_label_ids.reshape(-1)),
                (n, k, cfg.emb_dim),
            )
            lab_mask = ad.constant(codes.node_label_mask[:, :, None].astype(params.dtype))
            counts = codes.node_label_mask.sum(axis=1, keepdims=True)
            feats = ad.tsum(lab * lab_mask, axis=1) * ad.constant(
                (1.0 / counts).astype(params.dtype)
            ) + ad.gather_rows(params.emb_nodes, codes.node_key_ids)
            edges = (codes.edge_src, codes.edge_dst, codes.edge_weight)
            for layer in params.gat:
                feats = nn.gat_layer(feats, edges, layer)
            if params.pool_gat is not None:
                v_g = nn.attention_pool_segments(
                    feats, codes.node_seg, codes.num_graphs, params.pool_gat
                )
            else:
                v_g = nn.mean_pool_segments(feats, codes.node_seg, codes.num_graphs)
            g_vecs = params.proj_gat.apply(v_g).data
            scores[start : start + len(chunk)] = _cosine_rows(g_vecs, q_vec)
        return scores

    # Fallback: raw embedding centroids.
    q_rows = params.emb_query.data[qb.ids[0][qb.mask[0] > 0]]
    q_vec = q_rows.mean(axis=0)
    scores = np.empty(len(pool), dtype=np.float64)
    for i, cand in enumerate(pool):
        cb = collate_codes([cand.sample], params)
        rows = params.emb_code.data[cb.ids[0][cb.mask[0] > 0]]
        scores[i] = _cosine_rows(rows.mean(axis=0)[None, :], q_vec)[0]
    return scores


def _cosine_rows(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1) * np.linalg.norm(vec)
    if np.any(norms == 0.0):
        raise ModelError("cosine similarity of a zero vector is undefined")
    return (mat @ vec) / norms


def score_all(
    query: TokenSequence,
    pool: Sequence[PoolCandidate],
    params: ModelParams,
    mode: str = "exhaustive",
    top_n: int = DEFAULT_TOP_N,
    query_id: str = "",
    gold_id: str | None = None,
) -> RankedResult:
    """Rank the pool for one query; ties break by candidate id ascending."""
    if not pool:
        raise ModelError("cannot rank an empty candidate pool")
    ids = [c.id for c in pool]
    if mode == "exhaustive":
        scores = _full_scores(query, pool, params)
        return _rank(ids, scores, query_id, gold_id)
    if mode == "two_stage":
        if top_n < 1:
            raise ConfigError("top_n must be >= 1")
        coarse = _first_stage_scores(query, pool, params)
        keep = sorted(range(len(pool)), key=lambda i: (-coarse[i], ids[i]))[:top_n]
        subset = [pool[i] for i in keep]
        scores = _full_scores(query, subset, params)
        return _rank([c.id for c in subset], scores, query_id, gold_id)
    raise ConfigError(f"unknown scoring mode {mode!r}")


def top_k(result: RankedResult, k: int) -> RankedResult:
    """First min(k, pool) entries; order preserved, frank dropped if cut off."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    kept = result.ranking[:k]
    frank = result.frank if result.frank is not None and result.frank <= k else None
    return RankedResult(query_id=result.query_id, ranking=kept, frank=frank)


def search(
    query_text: str,
    pool: Sequence[PoolCandidate],
    params: ModelParams,
    k: int = 10,
    mode: str = "exhaustive",
    top_n: int = DEFAULT_TOP_N,
) -> dict:
    """Run one query end to end; returns the JSON-ready result document."""
    query = tokenize_query(query_text)
    if not query.tokens:
        raise ModelError("query has no tokens")
    result = top_k(score_all(query, pool, params, mode=mode, top_n=top_n), k)
    by_id = {c.id: c for c in pool}
    return {
        "query": query_text,
        "results": [
            {
                "id": cid,
                "score": score,
                "snippet_preview": by_id[cid].source[:PREVIEW_CHARS],
            }
            for cid, score in result.ranking
        ],
    }


def search_json(query_text: str, pool, params, **kwargs) -> str:
    return json.dumps(search(query_text, pool, params, **kwargs), indent=2, sort_keys=True)
