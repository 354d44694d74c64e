"""Unsupervised embedding pretraining.

Two producers share one skip-gram/negative-sampling trainer:

* token embeddings — subword-augmented skip-gram over code and docstring
  token sequences; a token's vector is the mean of its character-n-gram
  vectors plus its whole-token vector;
* node embeddings — skip-gram over random walks on code graphs, treating
  each node identity as a word.

All randomness is drawn up front from seeded NumPy generators, then consumed
by the selected kernel backend, so results are identical across backends and
runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import sgns_epoch, walk_fill
from .corpus import PAD_TOKEN, UNK_TOKEN
from .errors import ConfigError, TrainError
from .graph import Csrg

N_MIN_DEFAULT = 3
N_MAX_DEFAULT = 5
WINDOW_DEFAULT = 5
NEGATIVES_DEFAULT = 5
GAMMA_DEFAULT = 10
WALK_LENGTH_DEFAULT = 20


# ---------------------------------------------------------------------------
# Embedding table

@dataclass
class EmbeddingTable:
    """A key→vector map over a dense float32 matrix.

    A missing key falls back to the ``<unk>`` row when the table has one
    (token tables), else to the column-wise mean vector (node tables).
    """

    dim: int
    keys: list[str]
    matrix: np.ndarray
    train_losses: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._index = {k: i for i, k in enumerate(self.keys)}
        if self.matrix.shape != (len(self.keys), self.dim):
            raise ConfigError(
                f"embedding matrix shape {self.matrix.shape} does not match "
                f"{len(self.keys)} keys of dim {self.dim}"
            )
        self._mean: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def _fallback(self) -> np.ndarray:
        unk = self._index.get(UNK_TOKEN)
        if unk is not None:
            return self.matrix[unk]
        if self._mean is None:
            self._mean = (
                self.matrix.mean(axis=0, dtype=np.float64).astype(np.float32)
                if len(self.keys)
                else np.zeros(self.dim, dtype=np.float32)
            )
        return self._mean

    def vector(self, key: str) -> np.ndarray:
        idx = self._index.get(key)
        if idx is None:
            return self._fallback()
        return self.matrix[idx]

    def lookup_many(self, keys: Iterable[str]) -> np.ndarray:
        rows = [self.vector(k) for k in keys]
        if not rows:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack(rows)

    # -- serialization: JSON manifest + row-major little-endian f32 blob ----
    def save(self, prefix: str | Path) -> tuple[Path, Path]:
        prefix = Path(prefix)
        manifest_path = prefix.with_suffix(".json")
        blob_path = prefix.with_suffix(".f32")
        manifest = {"dim": self.dim, "count": len(self.keys), "keys": self.keys}
        manifest_path.write_text(json.dumps(manifest, separators=(",", ":")))
        blob_path.write_bytes(
            np.ascontiguousarray(self.matrix, dtype="<f4").tobytes()
        )
        return manifest_path, blob_path

    @classmethod
    def load(cls, prefix: str | Path) -> "EmbeddingTable":
        prefix = Path(prefix)
        manifest = json.loads(prefix.with_suffix(".json").read_text())
        dim, count = int(manifest["dim"]), int(manifest["count"])
        raw = prefix.with_suffix(".f32").read_bytes()
        matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()
        return cls(dim=dim, keys=list(manifest["keys"]), matrix=matrix)


# ---------------------------------------------------------------------------
# Subword n-grams

def subword_ngrams(token: str, n_min: int = N_MIN_DEFAULT, n_max: int = N_MAX_DEFAULT) -> list[str]:
    """Character n-grams of ``<token>`` plus the whole marked token.

    Ordered by n then position; the whole-token gram comes last unless it
    already appeared as an n-gram.
    """
    if not (1 <= n_min <= n_max):
        raise ConfigError(f"need 1 <= n_min <= n_max, got ({n_min}, {n_max})")
    marked = f"<{token}>"
    grams: list[str] = []
    for n in range(n_min, n_max + 1):
        for start in range(len(marked) - n + 1):
            grams.append(marked[start : start + n])
    if marked not in grams:
        grams.append(marked)
    return grams


# ---------------------------------------------------------------------------
# Shared skip-gram trainer

@dataclass
class _Bags:
    """CSR layout: input rows and mixing coefficients per center id."""

    offsets: np.ndarray
    rows: np.ndarray
    coefs: np.ndarray
    n_input_rows: int


def _window_pairs(
    sequences: list[list[int]], window: int
) -> tuple[np.ndarray, np.ndarray]:
    centers: list[int] = []
    contexts: list[int] = []
    for seq in sequences:
        n = len(seq)
        for i in range(n):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if i != j:
                    centers.append(seq[i])
                    contexts.append(seq[j])
    return (
        np.asarray(centers, dtype=np.int32),
        np.asarray(contexts, dtype=np.int32),
    )


def _negative_table(counts: np.ndarray) -> np.ndarray:
    """Cumulative distribution over keys, with the usual 3/4 power damping."""
    weights = counts.astype(np.float64) ** 0.75
    total = weights.sum()
    if total == 0:
        weights = np.ones_like(weights)
        total = weights.sum()
    return np.cumsum(weights / total)


def _train_skipgram(
    sequences: list[list[int]],
    n_keys: int,
    bags: _Bags,
    dim: int,
    window: int,
    negatives: int,
    epochs: int,
    lr: float,
    seed: int,
) -> tuple[np.ndarray, list[float]]:
    """Run SGNS and return the materialized per-key input matrix and losses."""
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    centers, contexts = _window_pairs(sequences, window)
    if centers.size == 0:
        raise TrainError("no training pairs: every sequence is shorter than 2 tokens")

    counts = np.bincount(contexts, minlength=n_keys)
    cumdist = _negative_table(counts)

    init_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    w_in = (
        (init_rng.random((bags.n_input_rows, dim), dtype=np.float64) - 0.5) / dim
    ).astype(np.float32)
    w_out = np.zeros((n_keys, dim), dtype=np.float32)

    losses: list[float] = []
    for epoch in range(epochs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1 + epoch]))
        order = rng.permutation(centers.size)
        neg = np.searchsorted(
            cumdist, rng.random((centers.size, negatives))
        ).astype(np.int32)
        loss = sgns_epoch(
            w_in,
            w_out,
            centers[order],
            bags.offsets,
            bags.rows,
            bags.coefs,
            contexts[order],
            neg,
            lr,
        )
        losses.append(loss)

    # materialize one vector per key from its bag
    out = np.zeros((n_keys, dim), dtype=np.float32)
    for key_id in range(n_keys):
        lo, hi = int(bags.offsets[key_id]), int(bags.offsets[key_id + 1])
        rows = bags.rows[lo:hi]
        coefs = bags.coefs[lo:hi].astype(np.float64)
        out[key_id] = (
            (w_in[rows].astype(np.float64) * coefs[:, None]).sum(axis=0)
        ).astype(np.float32)
    return out, losses


def _is_special(token: str) -> bool:
    return token.startswith("<") and token.endswith(">") and len(token) > 2


def train_token_embeddings(
    corpus: Sequence[Sequence[str]],
    dim: int,
    window: int = WINDOW_DEFAULT,
    negatives: int = NEGATIVES_DEFAULT,
    epochs: int = 5,
    lr: float = 0.025,
    n_min: int = N_MIN_DEFAULT,
    n_max: int = N_MAX_DEFAULT,
    seed: int = 0,
) -> EmbeddingTable:
    """Subword skip-gram over token sequences.

    Keys are the distinct tokens of the corpus (plus ``<pad>``/``<unk>``);
    each non-special token's input bag is its n-grams at coefficient 1/G
    together with its whole-token row at coefficient 1. Special tokens get
    only their whole-token row. The ``<pad>`` row stays zero.
    """
    sequences = [list(seq) for seq in corpus if len(seq) > 0]
    if not sequences:
        raise TrainError("cannot pretrain embeddings on an empty corpus")

    keys: list[str] = [PAD_TOKEN, UNK_TOKEN]
    seen = {PAD_TOKEN, UNK_TOKEN}
    for seq in sequences:
        for tok in seq:
            if tok not in seen:
                seen.add(tok)
                keys.append(tok)
    key_id = {k: i for i, k in enumerate(keys)}

    # input rows: one whole-token row per key, then one row per distinct gram
    gram_id: dict[str, int] = {}
    offsets = np.zeros(len(keys) + 1, dtype=np.int32)
    rows: list[int] = []
    coefs: list[float] = []
    for i, key in enumerate(keys):
        if _is_special(key):
            rows.append(i)
            coefs.append(1.0)
        else:
            grams = subword_ngrams(key, n_min, n_max)
            for g in grams:
                if g not in gram_id:
                    gram_id[g] = len(gram_id)
                rows.append(len(keys) + gram_id[g])
                coefs.append(1.0 / len(grams))
            rows.append(i)
            coefs.append(1.0)
        offsets[i + 1] = len(rows)
    bags = _Bags(
        offsets=offsets,
        rows=np.asarray(rows, dtype=np.int32),
        coefs=np.asarray(coefs, dtype=np.float32),
        n_input_rows=len(keys) + len(gram_id),
    )

    id_sequences = [[key_id[t] for t in seq] for seq in sequences]
    matrix, losses = _train_skipgram(
        id_sequences, len(keys), bags, dim, window, negatives, epochs, lr, seed
    )
    matrix[key_id[PAD_TOKEN]] = 0.0
    return EmbeddingTable(dim=dim, keys=keys, matrix=matrix, train_losses=losses)


# ---------------------------------------------------------------------------
# Random walks

@dataclass
class WalkSet:
    walks: list[list[int]]
    params: dict


def _bidirectional_csr(graph: Csrg) -> tuple[np.ndarray, np.ndarray]:
    n = len(graph.nodes)
    neighbor_sets: list[set[int]] = [set() for _ in range(n)]
    for e in graph.edges:
        neighbor_sets[e.src].add(e.dst)
        neighbor_sets[e.dst].add(e.src)
    indptr = np.zeros(n + 1, dtype=np.int32)
    indices: list[int] = []
    for v in range(n):
        nbrs = sorted(neighbor_sets[v])
        indices.extend(nbrs)
        indptr[v + 1] = len(indices)
    return indptr, np.asarray(indices, dtype=np.int32)


def random_walks(graph: Csrg, gamma: int = GAMMA_DEFAULT, t: int = WALK_LENGTH_DEFAULT, seed: int = 0) -> WalkSet:
    """``gamma`` shuffled passes over the vertices, one walk per vertex.

    Walking treats edges as bidirectional and ignores weights; a walk stops
    early at an isolated node.
    """
    if gamma < 1 or t < 1:
        raise ConfigError(f"need gamma >= 1 and t >= 1, got ({gamma}, {t})")
    n = len(graph.nodes)
    params = {"gamma": gamma, "t": t, "seed": seed}
    if n == 0:
        return WalkSet(walks=[], params=params)
    indptr, indices = _bidirectional_csr(graph)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    walks: list[list[int]] = []
    for _ in range(gamma):
        starts = rng.permutation(n).astype(np.int32)
        uniforms = rng.random((n, t - 1)) if t > 1 else np.zeros((n, 0))
        out = np.full((n, t), -1, dtype=np.int32)
        lengths = np.zeros(n, dtype=np.int32)
        walk_fill(indptr, indices, starts, uniforms, out, lengths)
        for w in range(n):
            walks.append(out[w, : int(lengths[w])].tolist())
    return WalkSet(walks=walks, params=params)


def train_node_embeddings(
    walks: WalkSet | Sequence[Sequence[str]],
    dim: int,
    window: int = WINDOW_DEFAULT,
    negatives: int = NEGATIVES_DEFAULT,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
    keys: Sequence[str] | None = None,
) -> EmbeddingTable:
    """Skip-gram over walk sequences, nodes as words.

    Accepts a ``WalkSet`` (node indices; pass ``keys`` to name them, else
    indices are stringified) or ready-made sequences of node-key strings,
    e.g. pooled across a whole corpus of graphs.
    """
    if isinstance(walks, WalkSet):
        if keys is not None:
            sequences = [[keys[i] for i in w] for w in walks.walks]
        else:
            sequences = [[str(i) for i in w] for w in walks.walks]
    else:
        sequences = [list(w) for w in walks]
    sequences = [s for s in sequences if s]
    if not sequences:
        raise TrainError("cannot pretrain node embeddings without walks")

    node_keys: list[str] = []
    seen: set[str] = set()
    for seq in sequences:
        for k in seq:
            if k not in seen:
                seen.add(k)
                node_keys.append(k)
    key_id = {k: i for i, k in enumerate(node_keys)}

    n = len(node_keys)
    bags = _Bags(
        offsets=np.arange(n + 1, dtype=np.int32),
        rows=np.arange(n, dtype=np.int32),
        coefs=np.ones(n, dtype=np.float32),
        n_input_rows=n,
    )
    id_sequences = [[key_id[k] for k in seq] for seq in sequences]
    matrix, losses = _train_skipgram(
        id_sequences, n, bags, dim, window, negatives, epochs, lr, seed
    )
    return EmbeddingTable(dim=dim, keys=node_keys, matrix=matrix, train_losses=losses)
