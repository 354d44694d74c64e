import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cssam.corpus import CodeDocPair, Vocab
from cssam.model import ModelConfig, ModelParams


@pytest.fixture
def tiny_config():
    """Smallest config that still exercises every branch of the model."""
    return ModelConfig(
        emb_dim=4,
        hidden=3,
        gat_dim=3,
        cress_enc_dim=3,
        cress_out_dim=3,
        d_m=3,
        blocks=2,
        dropout=0.0,
        max_code_len=12,
        max_query_len=6,
        max_nodes=10,
        max_label_tokens=4,
    )


@pytest.fixture
def tiny_vocabs():
    code = Vocab(sorted(set("int add a b return + ( ) { } ; , = x y * mul".split())))
    query = Vocab(sorted(set("add two numbers return sum of multiply together".split())))
    return code, query


@pytest.fixture
def tiny_params(tiny_config, tiny_vocabs):
    code_vocab, query_vocab = tiny_vocabs
    node_keys = ["program::program", "identifier::a", "identifier::b"]
    return ModelParams.create(
        tiny_config, code_vocab, query_vocab, node_keys, seed=3, dtype=np.float64
    )


@pytest.fixture
def small_pairs():
    return [
        CodeDocPair(
            id="p0",
            code="public int addNums(int a, int b) { return a + b; }",
            docstring="add two numbers and return the sum",
            lang="java",
        ),
        CodeDocPair(
            id="p1",
            code="public int mulNums(int x, int y) { return x * y; }",
            docstring="multiply two numbers together",
            lang="java",
        ),
        CodeDocPair(
            id="p2",
            code="public boolean isEmpty(String s) { return s.length() == 0; }",
            docstring="check whether the given string is empty",
            lang="java",
        ),
        CodeDocPair(
            id="p3",
            code="public String joinWords(String a, String b) { String out = a + b; return out; }",
            docstring="join two words into one string",
            lang="java",
        ),
    ]


@pytest.fixture
def corpus_file(tmp_path, small_pairs):
    path = tmp_path / "corpus.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for p in small_pairs:
            fh.write(
                json.dumps(
                    {"id": p.id, "code": p.code, "docstring": p.docstring, "lang": p.lang}
                )
                + "\n"
            )
    return path
