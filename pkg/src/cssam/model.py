"""The full matching network: branch encoders, fusion, similarity, loss.

The code side runs two branches (token matcher over source tokens, graph
attention over the merged syntax/data-flow graph); the docs side runs two
branches (LSTM over the query, the query half of the token matcher). Each
branch is pooled to a vector, projected to a common width, and concatenated;
pairs are scored by cosine similarity and trained with a margin ranking loss
summed over the batch.

The token matcher is a cross encoder: the code-branch vector depends on which
query it is paired with, so candidate encodings cannot be precomputed. The
retrieval module owns the consequences (exhaustive vs two-stage scoring).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .corpus import PAD_ID, UNK_ID, TokenSequence, Vocab, pad_or_truncate, tokenize_code
from .errors import ConfigError, ModelError
from .graph import Csrg, build_graph
from .pretrain import EmbeddingTable


@dataclass
class ModelConfig:
    """Architecture and ablation switches; defaults follow the trained setup."""

    emb_dim: int = 300
    hidden: int = 256          # LSTM hidden width
    gat_dim: int = 256         # graph-attention output width
    gat_layers: int = 1
    cress_enc_dim: int = 256   # window-3 context encoder width inside each block
    cress_out_dim: int = 256   # per-block output width
    d_m: int = 256             # common per-branch width before concatenation
    blocks: int = 4
    dropout: float = 0.2
    leaky_slope: float = 0.2
    align_identity: bool = False
    use_csrg: bool = True
    use_cress: bool = True
    use_attention: bool = True
    max_code_len: int = 200
    max_query_len: int = 30
    max_nodes: int = 80
    max_label_tokens: int = 8
    ast_weight: float = 0.4    # syntax-edge weight in the snippet graph
    dfg_weight: float = 0.6    # data-flow-edge weight in the snippet graph
    beta: float = 0.05
    freeze_embeddings: bool = False

    def __post_init__(self):
        for name in ("emb_dim", "hidden", "gat_dim", "cress_enc_dim", "cress_out_dim",
                     "d_m", "blocks", "max_code_len", "max_query_len", "max_nodes",
                     "max_label_tokens"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.ast_weight <= 0.0 or self.dfg_weight <= 0.0:
            raise ConfigError("edge weights must be positive")
        if self.gat_layers not in (1, 2):
            raise ConfigError("gat_layers must be 1 or 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.beta < 0.0:
            raise ConfigError("beta must be >= 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dc_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def encoding_dim(self) -> int:
        """Length of x_code and x_docs: one slot always, a second with the graph."""
        return 2 * self.d_m if self.use_csrg else self.d_m


@dataclass
class ProjParams:
    """Linear projection of one pooled branch vector to the common width."""

    w: Tensor
    b: Tensor

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int, out_dim: int, dtype) -> "ProjParams":
        return cls(
            w=Tensor(nn._glorot(rng, (in_dim, out_dim), dtype), requires_grad=True),
            b=Tensor(np.zeros((out_dim,), dtype=dtype), requires_grad=True),
        )

    def apply(self, v: Tensor) -> Tensor:
        return ad.matmul(v, self.w) + self.b


@dataclass
class ModelParams:
    """Every trainable tensor, addressable by a unique dotted name.

    Branches that the config disables have no parameters at all, so switching
    a branch off removes exactly its tensors from the trainable set.
    """

    config: ModelConfig
    code_vocab: Vocab
    query_vocab: Vocab
    node_keys: list[str]                     # row index -> graph-node key string
    emb_code: Tensor
    emb_query: Tensor
    emb_nodes: Tensor | None
    lstm: nn.LstmParams
    gat: list[nn.GatParams]
    cress: nn.CressParams | None
    pool_code: nn.PoolParams | None          # token-matcher branch, code side
    pool_gat: nn.PoolParams | None
    pool_docs_lstm: nn.PoolParams | None
    pool_docs_cress: nn.PoolParams | None    # token-matcher branch, docs side
    proj_code: ProjParams
    proj_gat: ProjParams | None
    proj_docs_lstm: ProjParams
    proj_docs_cress: ProjParams | None
    _node_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._node_index = {k: i for i, k in enumerate(self.node_keys)}
        names = [n for n, _ in self.named()]
        if len(names) != len(set(names)):
            raise ModelError("duplicate dotted parameter names")

    # -- naming ------------------------------------------------------------
    def named(self) -> Iterator[tuple[str, Tensor]]:
        yield "emb.code_tokens", self.emb_code
        yield "emb.query_tokens", self.emb_query
        if self.emb_nodes is not None:
            yield "emb.node_keys", self.emb_nodes
        yield from self.lstm.named("lstm")
        for i, g in enumerate(self.gat):
            yield from g.named(f"gat.layer{i}")
        if self.cress is not None:
            yield from self.cress.named("cress")
        for name, pool in (
            ("pool.code_tokens", self.pool_code),
            ("pool.csrg", self.pool_gat),
            ("pool.docs_lstm", self.pool_docs_lstm),
            ("pool.docs_cress", self.pool_docs_cress),
        ):
            if pool is not None:
                yield from pool.named(name)
        yield from self.proj_code.named("proj.code_tokens")
        if self.proj_gat is not None:
            yield from self.proj_gat.named("proj.csrg")
        yield from self.proj_docs_lstm.named("proj.docs_lstm")
        if self.proj_docs_cress is not None:
            yield from self.proj_docs_cress.named("proj.docs_cress")

    def trainable(self) -> Iterator[tuple[str, Tensor]]:
        for name, t in self.named():
            if self.config.freeze_embeddings and name.startswith("emb."):
                continue
            yield name, t

    def by_name(self) -> dict[str, Tensor]:
        return dict(self.named())

    def node_row(self, key_string: str) -> int:
        return self._node_index.get(key_string, 0)

    @property
    def dtype(self):
        return self.emb_code.dtype

    # -- construction --------------------------------------------------------
    @classmethod
    def create(
        cls,
        config: ModelConfig,
        code_vocab: Vocab,
        query_vocab: Vocab,
        node_keys: Sequence[str] = (),
        seed: int = 0,
        dtype=np.float32,
    ) -> "ModelParams":
        """Randomly initialized parameters sized to the vocabularies."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
        e = config.emb_dim

        def emb(count: int) -> Tensor:
            m = (rng.standard_normal((count, e)) * 0.1).astype(dtype)
            m[PAD_ID] = 0.0
            return Tensor(m, requires_grad=True)

        node_key_list = ["<unk>"] + [k for k in node_keys if k != "<unk>"]
        emb_nodes = None
        if config.use_csrg:
            m = (rng.standard_normal((len(node_key_list), e)) * 0.1).astype(dtype)
            emb_nodes = Tensor(m, requires_grad=True)

        return cls._assemble(
            config, code_vocab, query_vocab, node_key_list,
            emb(len(code_vocab)), emb(len(query_vocab)), emb_nodes, rng, dtype,
        )

    @classmethod
    def from_pretrained(
        cls,
        config: ModelConfig,
        code_table: EmbeddingTable,
        query_table: EmbeddingTable,
        node_table: EmbeddingTable | None,
        seed: int = 0,
        dtype=np.float32,
    ) -> "ModelParams":
        """Wrap pretrained embedding tables; other weights start random."""
        for name, table in (("code", code_table), ("query", query_table)):
            if table.dim != config.emb_dim:
                raise ConfigError(
                    f"{name} embedding table dim {table.dim} != configured {config.emb_dim}"
                )
        rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
        code_vocab = Vocab(code_table.keys[2:])
        query_vocab = Vocab(query_table.keys[2:])
        if code_vocab.index_to_token != list(code_table.keys):
            raise ConfigError("code embedding table keys do not start with <pad>, <unk>")
        if query_vocab.index_to_token != list(query_table.keys):
            raise ConfigError("query embedding table keys do not start with <pad>, <unk>")

        node_keys: list[str] = ["<unk>"]
        emb_nodes = None
        if config.use_csrg:
            if node_table is None:
                raise ConfigError("graph branch enabled but no node embedding table given")
            if node_table.dim != config.emb_dim:
                raise ConfigError(
                    f"node embedding table dim {node_table.dim} != configured {config.emb_dim}"
                )
            fallback = node_table.matrix.astype(np.float64).mean(axis=0, keepdims=True)
            node_keys = ["<unk>"] + [k for k in node_table.keys if k != "<unk>"]
            rows = [fallback.astype(dtype)] + [
                node_table.matrix[node_table._index[k]][None].astype(dtype)
                for k in node_keys[1:]
            ]
            emb_nodes = Tensor(np.concatenate(rows, axis=0), requires_grad=True)

        requires = not config.freeze_embeddings
        return cls._assemble(
            config, code_vocab, query_vocab, node_keys,
            Tensor(code_table.matrix.astype(dtype), requires_grad=requires),
            Tensor(query_table.matrix.astype(dtype), requires_grad=requires),
            emb_nodes, rng, dtype,
        )

    @classmethod
    def _assemble(cls, config, code_vocab, query_vocab, node_keys,
                  emb_code, emb_query, emb_nodes, rng, dtype) -> "ModelParams":
        e = config.emb_dim
        code_branch_dim = config.cress_out_dim if config.use_cress else e
        docs_cress_dim = code_branch_dim

        cress = None
        if config.use_cress:
            cress = nn.CressParams.create(
                rng, e, config.cress_enc_dim, config.cress_out_dim,
                blocks=config.blocks, align_identity=config.align_identity, dtype=dtype,
            )

        gat: list[nn.GatParams] = []
        proj_gat = None
        pool_gat = None
        if config.use_csrg:
            dims = [e] + [config.gat_dim] * config.gat_layers
            gat = [
                nn.GatParams.create(rng, dims[i], dims[i + 1], config.leaky_slope, dtype)
                for i in range(config.gat_layers)
            ]
            proj_gat = ProjParams.create(rng, config.gat_dim, config.d_m, dtype)
            if config.use_attention:
                pool_gat = nn.PoolParams.create(rng, config.gat_dim, dtype)

        pool_code = pool_docs_lstm = pool_docs_cress = None
        if config.use_attention:
            pool_code = nn.PoolParams.create(rng, code_branch_dim, dtype)
            pool_docs_lstm = nn.PoolParams.create(rng, config.hidden, dtype)
            if config.use_csrg:
                pool_docs_cress = nn.PoolParams.create(rng, docs_cress_dim, dtype)

        return cls(
            config=config,
            code_vocab=code_vocab,
            query_vocab=query_vocab,
            node_keys=list(node_keys),
            emb_code=emb_code,
            emb_query=emb_query,
            emb_nodes=emb_nodes,
            lstm=nn.LstmParams.create(rng, e, config.hidden, dtype),
            gat=gat,
            cress=cress,
            pool_code=pool_code,
            pool_gat=pool_gat,
            pool_docs_lstm=pool_docs_lstm,
            pool_docs_cress=pool_docs_cress if config.use_csrg else None,
            proj_code=ProjParams.create(rng, code_branch_dim, config.d_m, dtype),
            proj_gat=proj_gat,
            proj_docs_lstm=ProjParams.create(rng, config.hidden, config.d_m, dtype),
            proj_docs_cress=(
                ProjParams.create(rng, docs_cress_dim, config.d_m, dtype)
                if config.use_csrg else None
            ),
        )


# ---------------------------------------------------------------------------
# Input preparation

@dataclass
class CodeSample:
    """One candidate: its token sequence and (optionally) its graph."""

    tokens: TokenSequence
    graph: Csrg | None = None


def code_sample(source: str, lang: str, config: ModelConfig) -> CodeSample:
    """Tokenize and, when the graph branch is on, parse source into a sample."""
    tokens = tokenize_code(source)
    graph = (
        build_graph(
            source,
            lang,
            max_nodes=config.max_nodes,
            ast_weight=config.ast_weight,
            dfg_weight=config.dfg_weight,
        )
        if config.use_csrg
        else None
    )
    return CodeSample(tokens=tokens, graph=graph)


@dataclass
class QueryBatch:
    ids: np.ndarray    # (B, L) int64
    mask: np.ndarray   # (B, L) float64 {0, 1}

    @property
    def size(self) -> int:
        return self.ids.shape[0]

    def tile(self, n: int) -> "QueryBatch":
        """Repeat a single-row batch n times (for one-query-many-candidates)."""
        if self.size != 1:
            raise ModelError("tile expects a single-query batch")
        return QueryBatch(np.repeat(self.ids, n, axis=0), np.repeat(self.mask, n, axis=0))


@dataclass
class CodeBatch:
    ids: np.ndarray           # (B, L) int64
    mask: np.ndarray          # (B, L) float64
    node_label_ids: np.ndarray | None   # (N, K) int64
    node_label_mask: np.ndarray | None  # (N, K) float64
    node_key_ids: np.ndarray | None     # (N,) int64
    edge_src: np.ndarray | None         # (E,) int64, offset per graph
    edge_dst: np.ndarray | None
    edge_weight: np.ndarray | None      # (E,) float64
    node_seg: np.ndarray | None         # (N,) int64 graph index per node
    num_graphs: int

    @property
    def size(self) -> int:
        return self.ids.shape[0]


def _pad_token_batch(
    seqs: Sequence[TokenSequence], vocab: Vocab, max_len: int, what: str
) -> tuple[np.ndarray, np.ndarray]:
    lengths = []
    for i, seq in enumerate(seqs):
        real = sum(1 for m in seq.mask if m)
        if real == 0:
            raise ModelError(f"{what} {i} has no tokens")
        lengths.append(min(real, max_len))
    width = max(lengths)
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=np.float64)
    for i, seq in enumerate(seqs):
        padded = pad_or_truncate(seq, width).with_ids(vocab)
        ids[i] = padded.ids
        mask[i] = [1.0 if m else 0.0 for m in padded.mask]
    return ids, mask


def collate_queries(seqs: Sequence[TokenSequence], params: ModelParams) -> QueryBatch:
    if not seqs:
        raise ModelError("empty query batch")
    ids, mask = _pad_token_batch(seqs, params.query_vocab, params.config.max_query_len, "query")
    return QueryBatch(ids, mask)


def collate_codes(samples: Sequence[CodeSample], params: ModelParams) -> CodeBatch:
    if not samples:
        raise ModelError("empty code batch")
    cfg = params.config
    ids, mask = _pad_token_batch(
        [s.tokens for s in samples], params.code_vocab, cfg.max_code_len, "code sample"
    )
    if not cfg.use_csrg:
        return CodeBatch(ids, mask, None, None, None, None, None, None, None, len(samples))

    k = cfg.max_label_tokens
    label_rows: list[list[int]] = []
    label_masks: list[list[float]] = []
    key_ids: list[int] = []
    segs: list[int] = []
    srcs: list[int] = []
    dsts: list[int] = []
    weights: list[float] = []
    offset = 0
    for gi, sample in enumerate(samples):
        graph = sample.graph
        if graph is None:
            raise ModelError(f"code sample {gi} has no graph but the graph branch is on")
        if not graph.nodes:
            raise ModelError(f"code sample {gi} has an empty graph")
        for node in graph.nodes:
            toks = node.label_tokens().tokens[:k]
            row = [params.code_vocab.index(t) for t in toks] or [UNK_ID]
            m = [1.0] * len(row)
            row += [PAD_ID] * (k - len(row))
            m += [0.0] * (k - len(m))
            label_rows.append(row)
            label_masks.append(m)
            key_ids.append(params.node_row(node.key_string))
            segs.append(gi)
        for edge in graph.edges:
            srcs.append(edge.src + offset)
            dsts.append(edge.dst + offset)
            weights.append(edge.weight)
        offset += len(graph.nodes)

    return CodeBatch(
        ids, mask,
        np.asarray(label_rows, dtype=np.int64),
        np.asarray(label_masks, dtype=np.float64),
        np.asarray(key_ids, dtype=np.int64),
        np.asarray(srcs, dtype=np.int64),
        np.asarray(dsts, dtype=np.int64),
        np.asarray(weights, dtype=np.float64),
        np.asarray(segs, dtype=np.int64),
        len(samples),
    )


# ---------------------------------------------------------------------------
# Encoding

@dataclass
class PairEncoding:
    """Fused vectors for one (code, query) pair; equal lengths by construction."""

    x_code: Tensor
    x_docs: Tensor


def _embed(table: Tensor, ids: np.ndarray) -> Tensor:
    b, length = ids.shape
    flat = ad.gather_rows(table, ids.reshape(-1))
    return ad.reshape(flat, (b, length, table.shape[1]))


def _pool_sequence(
    h: Tensor, mask: np.ndarray, pool: nn.PoolParams | None, fallback: str
) -> Tensor:
    if pool is not None:
        return nn.attention_pool(h, mask, pool)
    if fallback == "max":
        return nn.masked_max_pool(h, mask)
    return nn.masked_mean_pool(h, mask)


def encode_batch(
    codes: CodeBatch,
    queries: QueryBatch,
    params: ModelParams,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Encode aligned code/query rows → (x_code, x_docs), each (B, D)."""
    if codes.size != queries.size:
        raise ModelError(f"code batch size {codes.size} != query batch size {queries.size}")
    cfg = params.config
    dtype = params.dtype
    if train_mode and cfg.dropout > 0.0 and rng is None:
        raise ModelError("training-mode encoding with dropout needs an rng")

    code_emb = _embed(params.emb_code, codes.ids)
    query_emb = _embed(params.emb_query, queries.ids)
    if dtype != code_emb.dtype:  # pragma: no cover - tables define the dtype
        raise ModelError("parameter dtype mismatch")

    # Slot 1: token matcher (code side) and LSTM (docs side).
    if cfg.use_cress:
        assert params.cress is not None
        drop = None
        if train_mode and cfg.dropout > 0.0:
            drop = lambda t: nn.dropout(t, cfg.dropout, rng, train=True)  # noqa: E731
        code_seq, docs_cress_seq = nn.cress_stack(
            code_emb, query_emb, codes.mask, queries.mask, params.cress, drop
        )
    else:
        code_seq, docs_cress_seq = code_emb, query_emb

    cress_fallback = "max" if cfg.use_cress else "mean"
    v_code = _pool_sequence(code_seq, codes.mask, params.pool_code, cress_fallback)
    x_code = params.proj_code.apply(v_code)

    lstm_seq = nn.lstm_encode(query_emb, queries.mask, params.lstm)
    v_lstm = _pool_sequence(lstm_seq, queries.mask, params.pool_docs_lstm, "mean")
    x_docs = params.proj_docs_lstm.apply(v_lstm)

    # Slot 2: graph attention (code side) and the matcher's docs half.
    if cfg.use_csrg:
        assert params.emb_nodes is not None and params.proj_gat is not None
        assert params.proj_docs_cress is not None
        n = codes.node_key_ids.shape[0]
        k = cfg.max_label_tokens
        lab = ad.reshape(
            ad.gather_rows(params.emb_code, codes.node_label_ids.reshape(-1)),
            (n, k, cfg.emb_dim),
        )
        lab_mask = ad.constant(codes.node_label_mask[:, :, None].astype(dtype))
        counts = codes.node_label_mask.sum(axis=1, keepdims=True)
        lab_mean = ad.tsum(lab * lab_mask, axis=1) * ad.constant((1.0 / counts).astype(dtype))
        feats = lab_mean + ad.gather_rows(params.emb_nodes, codes.node_key_ids)
        edges = (codes.edge_src, codes.edge_dst, codes.edge_weight)
        for layer in params.gat:
            feats = nn.gat_layer(feats, edges, layer)
        if params.pool_gat is not None:
            v_gat = nn.attention_pool_segments(feats, codes.node_seg, codes.num_graphs, params.pool_gat)
        else:
            v_gat = nn.mean_pool_segments(feats, codes.node_seg, codes.num_graphs)
        x_code = ad.concat([x_code, params.proj_gat.apply(v_gat)], axis=1)

        v_docs_cress = _pool_sequence(
            docs_cress_seq, queries.mask, params.pool_docs_cress, cress_fallback
        )
        x_docs = ad.concat([x_docs, params.proj_docs_cress.apply(v_docs_cress)], axis=1)

    return x_code, x_docs


def encode_pair(
    code: CodeSample,
    query: TokenSequence,
    params: ModelParams,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> PairEncoding:
    """Encode one (code, query) pair into its two fused vectors."""
    codes = collate_codes([code], params)
    queries = collate_queries([query], params)
    x_code, x_docs = encode_batch(codes, queries, params, train_mode, rng)
    d = x_code.shape[1]
    return PairEncoding(
        x_code=ad.reshape(x_code, (d,)),
        x_docs=ad.reshape(x_docs, (d,)),
    )


# ---------------------------------------------------------------------------
# Similarity and loss

def _as_tensor(v) -> Tensor:
    return v if isinstance(v, Tensor) else ad.constant(np.asarray(v, dtype=np.float64))


def similarity(x, q) -> Tensor:
    """Cosine similarity of two equal-length nonzero vectors (0-d tensor)."""
    xt, qt = _as_tensor(x), _as_tensor(q)
    if xt.shape != qt.shape or xt.ndim != 1:
        raise ModelError(f"similarity needs equal-length vectors, got {xt.shape} and {qt.shape}")
    nx = float(np.linalg.norm(xt.data))
    nq = float(np.linalg.norm(qt.data))
    if nx == 0.0 or nq == 0.0:
        raise ModelError("cosine similarity of a zero vector is undefined")
    dot = ad.tsum(xt * qt)
    return dot / (ad.sqrt(ad.tsum(xt * xt)) * ad.sqrt(ad.tsum(qt * qt)))


def triplet_loss(x, d_pos, d_neg, beta: float = 0.05) -> Tensor:
    """max(0, beta - sim(x, d+) + sim(x, d-)) for one triplet (0-d tensor)."""
    if beta < 0.0:
        raise ModelError("beta must be >= 0")
    margin = ad.constant(np.asarray(beta, dtype=np.float64))
    return ad.relu(margin - similarity(x, d_pos) + similarity(x, d_neg))


def _row_cosine(a: Tensor, b: Tensor) -> Tensor:
    norms_a = ad.sqrt(ad.tsum(a * a, axis=1))
    norms_b = ad.sqrt(ad.tsum(b * b, axis=1))
    if np.any(norms_a.data == 0.0) or np.any(norms_b.data == 0.0):
        raise ModelError("cosine similarity of a zero vector is undefined")
    return ad.tsum(a * b, axis=1) / (norms_a * norms_b)


def batch_triplet_loss(
    x_code: Tensor,
    d_pos: Tensor,
    d_neg: Tensor,
    beta: float = 0.05,
    x_code_neg: Tensor | None = None,
) -> tuple[Tensor, np.ndarray]:
    """Summed margin loss over (B, D) rows; also the per-triplet values.

    ``x_code_neg`` carries the code vectors conditioned on the negative
    queries; the cross encoder re-encodes the code per pairing, so the
    negative similarity must use that encoding (it defaults to ``x_code``
    for encoders whose code vector is pairing-independent).
    """
    if beta < 0.0:
        raise ModelError("beta must be >= 0")
    anchor_neg = x_code if x_code_neg is None else x_code_neg
    margin = ad.constant(np.asarray(beta, dtype=x_code.data.dtype))
    per = ad.relu(margin - _row_cosine(x_code, d_pos) + _row_cosine(anchor_neg, d_neg))
    return ad.tsum(per), per.data.copy()
