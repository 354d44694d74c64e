"""Metric arithmetic against brute-force oracles, plus report plumbing."""

import math

import numpy as np
import pytest
from synth_corpus import generate_pairs

from cssam import evaluation as E, model as M
from cssam.corpus import build_vocab
from cssam.errors import ConfigError, EvalError


def rec(frank, pool=50, qid="q"):
    return E.EvalRecord(query_id=qid, frank=frank, pool_size=pool)


# ---------------------------------------------------------------------------
# record validation

def test_record_bounds():
    assert rec(1).frank == 1
    assert rec(None).frank is None
    with pytest.raises(EvalError):
        rec(0)
    with pytest.raises(EvalError):
        rec(51)
    with pytest.raises(EvalError):
        E.EvalRecord(query_id="q", frank=1, pool_size=0)


# ---------------------------------------------------------------------------
# hand-computed metric values

def test_mrr_hand_value():
    records = [rec(1, qid="a"), rec(2, qid="b"), rec(4, qid="c")]
    assert E.mrr(records) == pytest.approx((1 + 0.5 + 0.25) / 3, abs=1e-12)
    assert E.mrr(records) == pytest.approx(0.5833333333333334, abs=1e-12)


def test_mrr_missing_gold_counts_zero():
    assert E.mrr([rec(None)]) == 0.0
    assert E.mrr([rec(1), rec(None)]) == pytest.approx(0.5)


def test_success_rate_hand_values():
    records = [rec(1), rec(3), rec(12)]
    assert E.success_rate_at_k(records, 1) == pytest.approx(1 / 3)
    assert E.success_rate_at_k(records, 5) == pytest.approx(2 / 3)
    assert E.success_rate_at_k(records, 12) == pytest.approx(1.0)
    assert E.success_rate_at_k([rec(None)], 5) == 0.0


def test_ndcg_hand_values():
    assert E.ndcg_at_k([rec(1)], 50) == pytest.approx(1.0, abs=1e-12)
    # rank 3 → 1/log2(4) = 0.5 exactly
    assert E.ndcg_at_k([rec(3)], 50) == pytest.approx(0.5, abs=1e-12)
    assert E.ndcg_at_k([rec(None)], 50) == 0.0
    # outside the cutoff contributes nothing
    assert E.ndcg_at_k([rec(10)], 5) == 0.0


def test_metric_errors():
    with pytest.raises(EvalError):
        E.mrr([])
    with pytest.raises(EvalError):
        E.success_rate_at_k([], 5)
    with pytest.raises(ConfigError):
        E.success_rate_at_k([rec(1)], 0)
    with pytest.raises(ConfigError):
        E.ndcg_at_k([rec(1)], 0)


def test_metrics_match_brute_force_oracle():
    """Independent recomputation over random rank lists."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        pool = int(rng.integers(2, 60))
        franks = [
            None if rng.random() < 0.2 else int(rng.integers(1, pool + 1))
            for _ in range(int(rng.integers(1, 40)))
        ]
        records = [rec(f, pool=pool, qid=str(i)) for i, f in enumerate(franks)]

        naive_mrr = sum((1.0 / f) if f else 0.0 for f in franks) / len(franks)
        assert E.mrr(records) == pytest.approx(naive_mrr, abs=1e-12)
        for k in (1, 5, 10):
            naive_sr = sum(1 for f in franks if f and f <= k) / len(franks)
            assert E.success_rate_at_k(records, k) == pytest.approx(naive_sr, abs=1e-12)
        naive_ndcg = sum(
            1.0 / math.log2(f + 1) if f and f <= 50 else 0.0 for f in franks
        ) / len(franks)
        assert E.ndcg_at_k(records, 50) == pytest.approx(naive_ndcg, abs=1e-12)


# ---------------------------------------------------------------------------
# evaluate() with the synthetic scorers

@pytest.fixture(scope="module")
def pairs():
    return generate_pairs(48, seed=1)


def test_oracle_scorer_is_perfect(pairs):
    rep = E.evaluate(None, pairs, pool_size=10, scorer="oracle", seed=3)
    assert rep.sr1 == 1.0 and rep.sr5 == 1.0 and rep.mrr == 1.0 and rep.ndcg50 == 1.0
    assert rep.query_count == len(pairs)
    assert rep.pool_size == 10 and rep.pool_mode == "sampled"


def test_random_scorer_matches_harmonic_expectation(pairs):
    rep = E.evaluate(None, pairs, pool_size=24, scorer="random", seed=3)
    expected = sum(1.0 / r for r in range(1, 25)) / 24
    assert abs(rep.mrr - expected) < 0.08  # 48 queries only
    again = E.evaluate(None, pairs, pool_size=24, scorer="random", seed=3)
    assert again.to_dict() == rep.to_dict()
    other = E.evaluate(None, pairs, pool_size=24, scorer="random", seed=4)
    assert other.to_dict() != rep.to_dict()


def test_full_pool_mode(pairs):
    rep = E.evaluate(None, pairs, pool_size=None, scorer="oracle", seed=0)
    assert rep.pool_mode == "full" and rep.pool_size == len(pairs)
    cap = E.evaluate(None, pairs, pool_size=10_000, scorer="oracle", seed=0)
    assert cap.pool_mode == "full" and cap.pool_size == len(pairs)


def test_evaluate_input_validation(pairs):
    with pytest.raises(EvalError):
        E.evaluate(None, [], scorer="oracle")
    with pytest.raises(ConfigError):
        E.evaluate(None, pairs, scorer="best")
    with pytest.raises(ConfigError):
        E.evaluate(None, pairs, scorer="model")  # needs params
    dup = [pairs[0], pairs[0]]
    with pytest.raises(EvalError):
        E.evaluate(None, dup, scorer="oracle")


def test_model_scorer_end_to_end(pairs):
    subset = pairs[:12]
    cfg = M.ModelConfig(
        emb_dim=16, hidden=16, gat_dim=16, cress_enc_dim=16, cress_out_dim=16,
        d_m=16, blocks=1, dropout=0.0, max_code_len=60, max_query_len=12,
        max_nodes=40,
    )
    code_vocab, query_vocab = build_vocab(subset)
    from cssam.graph import build_graph

    node_keys, seen = [], set()
    for p in subset:
        for node in build_graph(p.code, p.lang, cfg.max_nodes).nodes:
            if node.key_string not in seen:
                seen.add(node.key_string)
                node_keys.append(node.key_string)
    params = M.ModelParams.create(cfg, code_vocab, query_vocab, node_keys, seed=1)
    rep = E.evaluate(params, subset, pool_size=6, scorer="model", seed=1)
    assert 0.0 <= rep.mrr <= 1.0
    assert rep.sr1 <= rep.sr5 <= rep.sr10
    # MRR is bounded by SR@1 plus half the remaining mass
    assert rep.mrr <= rep.sr1 + (1 - rep.sr1) / 2 + 1e-9
    assert rep.build_id == E.params_build_id(params)
    again = E.evaluate(params, subset, pool_size=6, scorer="model", seed=1)
    assert again.to_dict() == rep.to_dict()


# ---------------------------------------------------------------------------
# report rendering

def test_report_table_columns(pairs):
    rep = E.evaluate(None, pairs, pool_size=10, scorer="oracle", seed=3)
    table = E.render_table([("Full", rep), ("Base", rep)])
    lines = table.split("\n")
    assert lines[0].split() == ["Model", "SR@1", "SR@5", "SR@10", "MRR", "NDCG@50"]
    assert set(lines[1]) <= {"-", " "}
    assert lines[2].startswith("Full") and lines[3].startswith("Base")
    assert "1.0000" in lines[2]


def test_report_json_round_trip(pairs):
    import json

    rep = E.evaluate(None, pairs, pool_size=10, scorer="oracle", seed=3)
    doc = json.loads(rep.to_json())
    assert doc["metrics"]["MRR"] == 1.0
    assert doc["scorer"] == "oracle"
    assert doc["query_count"] == 48
