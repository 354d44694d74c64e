"""Whole-model tests: encoding shapes, batch/single parity, similarity and
loss arithmetic, ablation parameter sets, end-to-end gradients."""

import numpy as np
import pytest

from cssam import model as M, nn
from cssam.corpus import TokenSequence, Vocab, tokenize_query
from cssam.errors import ConfigError, ModelError
from cssam.pretrain import EmbeddingTable

SRC_ADD = "int add(int a, int b) { return a + b; }"
SRC_MUL = "int mul(int x, int y) { return x * y; }"


@pytest.fixture
def sample(tiny_config):
    return M.code_sample(SRC_ADD, "java", tiny_config)


@pytest.fixture
def query():
    return tokenize_query("add two numbers")


# ---------------------------------------------------------------------------
# config

def test_config_round_trip(tiny_config):
    again = M.ModelConfig.from_dict(tiny_config.to_dict())
    assert again == tiny_config


def test_config_rejects_unknown_keys(tiny_config):
    data = tiny_config.to_dict()
    data["windowsize"] = 3
    with pytest.raises(ConfigError):
        M.ModelConfig.from_dict(data)


def test_config_validates_dimensions():
    with pytest.raises(ConfigError):
        M.ModelConfig(emb_dim=0)
    with pytest.raises(ConfigError):
        M.ModelConfig(dropout=1.0)
    with pytest.raises(ConfigError):
        M.ModelConfig(ast_weight=0.0)


def test_config_defaults_match_published_setup():
    cfg = M.ModelConfig()
    assert cfg.emb_dim == 300
    assert cfg.hidden == 256
    assert cfg.blocks == 4
    assert cfg.dropout == 0.2
    assert cfg.beta == 0.05
    assert cfg.max_code_len == 200
    assert cfg.max_query_len == 30
    assert (cfg.ast_weight, cfg.dfg_weight) == (0.4, 0.6)


# ---------------------------------------------------------------------------
# code samples and collation

def test_code_sample_builds_graph_when_enabled(sample, tiny_config):
    assert sample.graph is not None
    assert len(sample.graph.nodes) <= tiny_config.max_nodes
    assert len(sample.tokens) > 0


def test_code_sample_skips_graph_when_disabled(tiny_config):
    cfg = M.ModelConfig(**{**tiny_config.to_dict(), "use_csrg": False})
    assert M.code_sample(SRC_ADD, "java", cfg).graph is None


def test_collate_applies_length_caps(tiny_params, sample, query):
    codes = M.collate_codes([sample], tiny_params)
    queries = M.collate_queries([query], tiny_params)
    assert codes.ids.shape[1] <= tiny_params.config.max_code_len
    assert queries.ids.shape[1] <= tiny_params.config.max_query_len


def test_collate_rejects_empty_inputs(tiny_params):
    with pytest.raises(ModelError):
        M.collate_queries([TokenSequence([])], tiny_params)
    with pytest.raises(ModelError):
        M.collate_codes([M.CodeSample(tokens=TokenSequence([]))], tiny_params)


def test_collate_requires_graph_when_csrg_enabled(tiny_params):
    from cssam.corpus import tokenize_code

    with pytest.raises(ModelError):
        M.collate_codes([M.CodeSample(tokens=tokenize_code("a"))], tiny_params)


def test_query_batch_tile(tiny_params, query):
    qb = M.collate_queries([query], tiny_params)
    tiled = qb.tile(3)
    assert tiled.ids.shape[0] == 3
    assert np.array_equal(tiled.ids[0], tiled.ids[2])


# ---------------------------------------------------------------------------
# encoding

def test_encode_pair_shape_and_determinism(sample, query, tiny_params):
    enc = M.encode_pair(sample, query, tiny_params)
    # d_m from the matcher plus d_m from the graph branch
    assert enc.x_code.shape == (6,)
    assert enc.x_docs.shape == (6,)
    enc2 = M.encode_pair(sample, query, tiny_params)
    assert np.array_equal(enc.x_code.data, enc2.x_code.data)
    assert np.array_equal(enc.x_docs.data, enc2.x_docs.data)


def test_encode_batch_matches_single_pairs(tiny_config, tiny_params, sample, query):
    sample2 = M.code_sample(SRC_MUL, "java", tiny_config)
    query2 = tokenize_query("multiply two numbers together")
    codes = M.collate_codes([sample, sample2], tiny_params)
    queries = M.collate_queries([query, query2], tiny_params)
    x_code, x_docs = M.encode_batch(codes, queries, tiny_params)
    for i, (s, q) in enumerate([(sample, query), (sample2, query2)]):
        single = M.encode_pair(s, q, tiny_params)
        assert np.abs(x_code.data[i] - single.x_code.data).max() < 1e-12
        assert np.abs(x_docs.data[i] - single.x_docs.data).max() < 1e-12


def test_encode_batch_rejects_mismatched_sizes(tiny_params, sample, query):
    codes = M.collate_codes([sample], tiny_params)
    queries = M.collate_queries([query], tiny_params).tile(2)
    with pytest.raises(ModelError):
        M.encode_batch(codes, queries, tiny_params)


def test_encode_requires_rng_for_dropout(tiny_config, tiny_vocabs, sample, query):
    cfg = M.ModelConfig(**{**tiny_config.to_dict(), "dropout": 0.5})
    params = M.ModelParams.create(cfg, *tiny_vocabs, ["program::program"], seed=0,
                                  dtype=np.float64)
    codes = M.collate_codes([sample], params)
    queries = M.collate_queries([query], params)
    with pytest.raises(ModelError):
        M.encode_batch(codes, queries, params, train_mode=True, rng=None)


def test_zeroed_params_give_zero_vectors(tiny_config, tiny_vocabs, sample, query):
    code_vocab, query_vocab = tiny_vocabs
    params = M.ModelParams.create(
        tiny_config, code_vocab, query_vocab, ["program::program"], seed=3,
        dtype=np.float64,
    )
    for _, tensor in params.named():
        tensor.data[:] = 0.0
    enc = M.encode_pair(sample, query, params)
    assert np.all(enc.x_code.data == 0.0)
    assert np.all(enc.x_docs.data == 0.0)
    with pytest.raises(ModelError):
        M.similarity(enc.x_code, enc.x_docs)


# ---------------------------------------------------------------------------
# similarity / loss arithmetic

def test_similarity_basic_identities():
    v = np.array([1.0, 2.0, 3.0])
    assert M.similarity(v, v).item() == pytest.approx(1.0, abs=1e-12)
    assert M.similarity(v, -v).item() == pytest.approx(-1.0, abs=1e-12)
    assert M.similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0])).item() == pytest.approx(0.0, abs=1e-12)
    assert M.similarity(3.7 * v, v).item() == pytest.approx(1.0, abs=1e-9)


def test_similarity_shape_checks():
    with pytest.raises(ModelError):
        M.similarity(np.ones(3), np.ones(4))
    with pytest.raises(ModelError):
        M.similarity(np.ones((2, 2)), np.ones((2, 2)))


def vec_with_cos(c):
    return np.array([c, np.sqrt(1.0 - c * c)])


def test_triplet_loss_hand_values():
    x = np.array([1.0, 0.0])
    # margin satisfied: 0.05 - 0.9 + 0.2 < 0
    assert M.triplet_loss(x, vec_with_cos(0.9), vec_with_cos(0.2), 0.05).item() == pytest.approx(0.0, abs=1e-12)
    # tie: exactly beta
    assert M.triplet_loss(x, vec_with_cos(0.5), vec_with_cos(0.5), 0.05).item() == pytest.approx(0.05, abs=1e-12)
    # inverted: 0.05 - 0.2 + 0.9
    assert M.triplet_loss(x, vec_with_cos(0.2), vec_with_cos(0.9), 0.05).item() == pytest.approx(0.75, abs=1e-12)


def test_triplet_loss_rejects_negative_margin():
    x = np.ones(2)
    with pytest.raises(ModelError):
        M.triplet_loss(x, x, x, beta=-0.1)


def test_batch_triplet_loss_sums_rows():
    x = np.array([[1.0, 0.0], [1.0, 0.0]])
    pos = np.stack([vec_with_cos(0.5), vec_with_cos(0.9)])
    neg = np.stack([vec_with_cos(0.5), vec_with_cos(0.2)])
    from cssam import autodiff as ad

    loss, per = M.batch_triplet_loss(ad.constant(x), ad.constant(pos), ad.constant(neg), beta=0.05)
    assert per == pytest.approx([0.05, 0.0], abs=1e-12)
    assert loss.item() == pytest.approx(0.05, abs=1e-12)


def test_batch_triplet_loss_uses_negative_anchor_when_given():
    from cssam import autodiff as ad

    x_pos = ad.constant(np.array([[1.0, 0.0]]))
    x_neg = ad.constant(np.array([[0.0, 1.0]]))
    pos = ad.constant(np.array([[1.0, 0.0]]))   # sim+ = 1 vs x_pos
    neg = ad.constant(np.array([[0.0, 1.0]]))   # sim- = 1 vs x_neg, 0 vs x_pos
    loss_default, _ = M.batch_triplet_loss(x_pos, pos, neg, beta=0.5)
    loss_joint, _ = M.batch_triplet_loss(x_pos, pos, neg, beta=0.5, x_code_neg=x_neg)
    assert loss_default.item() == pytest.approx(0.0)       # 0.5 - 1 + 0
    assert loss_joint.item() == pytest.approx(0.5)         # 0.5 - 1 + 1


# ---------------------------------------------------------------------------
# parameter sets across ablations

def test_full_model_parameter_names(tiny_params):
    names = {n for n, _ in tiny_params.named()}
    assert any(n.startswith("cress.") for n in names)
    assert any(n.startswith("gat.") for n in names)
    assert {"emb.code_tokens", "emb.query_tokens", "emb.node_keys"} <= names


def test_disabling_csrg_removes_graph_branch(tiny_config, tiny_vocabs, query):
    code_vocab, query_vocab = tiny_vocabs
    keys = ["program::program"]
    full = M.ModelParams.create(tiny_config, code_vocab, query_vocab, keys, seed=3, dtype=np.float64)
    cfg = M.ModelConfig(**{**tiny_config.to_dict(), "use_csrg": False})
    slim = M.ModelParams.create(cfg, code_vocab, query_vocab, keys, seed=3, dtype=np.float64)
    removed = {n for n, _ in full.named()} - {n for n, _ in slim.named()}
    assert removed
    assert all(
        n.startswith(("gat.", "emb.node_keys", "pool.csrg", "proj.csrg",
                      "pool.docs_cress", "proj.docs_cress"))
        for n in removed
    )
    enc = M.encode_pair(M.code_sample(SRC_ADD, "java", cfg), query, slim)
    assert enc.x_code.shape == (3,)  # single-slot vectors


def test_disabling_cress_removes_matcher(tiny_config, tiny_vocabs, query):
    cfg = M.ModelConfig(**{**tiny_config.to_dict(), "use_cress": False})
    params = M.ModelParams.create(cfg, *tiny_vocabs, ["program::program"], seed=3, dtype=np.float64)
    assert not any(n.startswith("cress.") for n, _ in params.named())
    enc = M.encode_pair(M.code_sample(SRC_ADD, "java", cfg), query, params)
    assert enc.x_code.shape == (6,)  # both slots still present


def test_base_variant_has_no_attention_params(tiny_config, tiny_vocabs, query):
    cfg = M.ModelConfig(**{
        **tiny_config.to_dict(),
        "use_cress": False, "use_csrg": False, "use_attention": False,
    })
    params = M.ModelParams.create(cfg, *tiny_vocabs, (), seed=3, dtype=np.float64)
    names = {n for n, _ in params.named()}
    assert not any(n.startswith(("cress.", "gat.", "pool.")) for n in names)
    enc = M.encode_pair(M.code_sample(SRC_ADD, "java", cfg), query, params)
    assert enc.x_code.shape == (3,)


def test_frozen_embeddings_are_not_trainable(tiny_config, tiny_vocabs):
    cfg = M.ModelConfig(**{**tiny_config.to_dict(), "freeze_embeddings": True})
    params = M.ModelParams.create(cfg, *tiny_vocabs, ["program::program"], seed=3, dtype=np.float64)
    trainable = {n for n, _ in params.trainable()}
    assert not any(n.startswith("emb.") for n in trainable)
    assert any(n.startswith("emb.") for n, _ in params.named())


def test_params_create_deterministic(tiny_config, tiny_vocabs):
    a = M.ModelParams.create(tiny_config, *tiny_vocabs, ["program::program"], seed=3)
    b = M.ModelParams.create(tiny_config, *tiny_vocabs, ["program::program"], seed=3)
    for (name_a, ta), (name_b, tb) in zip(a.named(), b.named()):
        assert name_a == name_b
        assert np.array_equal(ta.data, tb.data)


# ---------------------------------------------------------------------------
# pretrained initialization

def _table(keys, dim, seed):
    rng = np.random.default_rng(seed)
    return EmbeddingTable(
        dim=dim,
        keys=["<pad>", "<unk>"] + keys,
        matrix=rng.standard_normal((len(keys) + 2, dim)).astype(np.float32),
    )


def test_from_pretrained_copies_rows(tiny_config):
    code_table = _table(["alpha", "beta"], tiny_config.emb_dim, 0)
    query_table = _table(["find", "file"], tiny_config.emb_dim, 1)
    node_table = _table(["program::program"], tiny_config.emb_dim, 2)
    params = M.ModelParams.from_pretrained(
        tiny_config, code_table, query_table, node_table, seed=0)
    assert params.code_vocab.index_to_token == list(code_table.keys)
    row = params.code_vocab.index("alpha")
    assert np.allclose(params.emb_code.data[row], code_table.matrix[2])
    assert np.allclose(params.emb_query.data[3], query_table.matrix[3])


def test_from_pretrained_requires_node_table_with_csrg(tiny_config):
    code_table = _table(["alpha"], tiny_config.emb_dim, 0)
    query_table = _table(["find"], tiny_config.emb_dim, 1)
    with pytest.raises(ConfigError):
        M.ModelParams.from_pretrained(tiny_config, code_table, query_table, None, seed=0)


def _no_csrg(cfg):
    return M.ModelConfig(**{**cfg.to_dict(), "use_csrg": False})


def test_from_pretrained_rejects_wrong_dim(tiny_config):
    bad = _table(["x"], tiny_config.emb_dim + 1, 0)
    good = _table(["y"], tiny_config.emb_dim, 1)
    with pytest.raises(ConfigError):
        M.ModelParams.from_pretrained(_no_csrg(tiny_config), bad, good, None, seed=0)


def test_from_pretrained_requires_reserved_rows(tiny_config):
    rng = np.random.default_rng(2)
    no_pad = EmbeddingTable(
        dim=tiny_config.emb_dim,
        keys=["plain", "words"],
        matrix=rng.standard_normal((2, tiny_config.emb_dim)).astype(np.float32),
    )
    good = _table(["y"], tiny_config.emb_dim, 1)
    with pytest.raises(ConfigError):
        M.ModelParams.from_pretrained(_no_csrg(tiny_config), no_pad, good, None, seed=0)


# ---------------------------------------------------------------------------
# end-to-end gradient

@pytest.mark.parametrize("seed", [5, 13, 23])
def test_end_to_end_triplet_gradient(tiny_vocabs, seed):
    cfg = M.ModelConfig(
        emb_dim=2, hidden=2, gat_dim=2, cress_enc_dim=2, cress_out_dim=2, d_m=2,
        blocks=1, dropout=0.0, max_code_len=6, max_query_len=4, max_nodes=6,
        max_label_tokens=2,
    )
    params = M.ModelParams.create(cfg, *tiny_vocabs, ["program::program"], seed=seed, dtype=np.float64)
    # Zero-initialized biases park relu pre-activations exactly on the kink,
    # where a central difference is meaningless; jitter every tensor into
    # general position, and pick a margin large enough that the hinge stays
    # strictly active for any pair of cosines.
    jitter = np.random.default_rng(seed + 100)
    for _, tensor in params.named():
        tensor.data += 0.1 * jitter.standard_normal(tensor.data.shape)
    sample = M.code_sample("a = b + c;", "toy", cfg)
    q_pos = tokenize_query("sum of values")
    q_neg = tokenize_query("open the file")
    codes = M.collate_codes([sample, sample], params)
    qb_pos = M.collate_queries([q_pos, q_pos], params)
    qb_neg = M.collate_queries([q_neg, q_neg], params)

    def f():
        xc_p, xd_p = M.encode_batch(codes, qb_pos, params)
        xc_n, xd_n = M.encode_batch(codes, qb_neg, params)
        loss, _ = M.batch_triplet_loss(xc_p, xd_p, xd_n, beta=2.5, x_code_neg=xc_n)
        return loss

    wrt = [tensor for _, tensor in params.trainable()]
    err = nn.grad_check(f, wrt, eps=1e-5)
    assert err < 1e-4
