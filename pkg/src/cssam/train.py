"""Training loop: triplet sampling, Adam updates, checkpointing, telemetry.

Each batch is scored twice — once with the paired docstrings and once with
in-batch negative docstrings — because the token matcher conditions the code
vector on the query it is paired with. The batch loss is the sum of the
per-triplet margins, matching the summed ranking objective.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Callable, IO, Iterator, Sequence

import numpy as np

from .corpus import CodeDocPair, TokenSequence, tokenize_query
from .errors import CheckpointError, ConfigError, TrainError
from .model import (
    CodeSample,
    ModelConfig,
    ModelParams,
    QueryBatch,
    batch_triplet_loss,
    code_sample,
    collate_codes,
    collate_queries,
    encode_batch,
)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the published training setup."""

    batch_size: int = 32
    epochs: int = 100
    lr: float = 1e-4
    beta: float = 0.05
    dropout: float = 0.2
    max_code_len: int = 200
    max_query_len: int = 30
    max_nodes: int = 80
    seed: int = 0
    clip_norm: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int | None = None  # early stopping on validation score, off by default

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (in-batch negatives)")
        for name in ("epochs", "max_code_len", "max_query_len", "max_nodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("lr", "clip_norm", "adam_eps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.beta < 0.0:
            raise ConfigError("beta must be >= 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dc_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# Triplet sampling

@dataclass
class Triplet:
    """One ranking example: a code anchor, its docstring, and a wrong one."""

    code: CodeDocPair
    d_pos: str
    d_neg: str
    anchor_index: int
    negative_index: int


def sample_triplets(batch: Sequence[CodeDocPair], seed: int) -> list[Triplet]:
    """Pair each record with a uniformly drawn other-record docstring."""
    if len(batch) < 2:
        raise TrainError("triplet sampling needs a batch of at least 2 records")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, len(batch)]))
    triplets = []
    for i, rec in enumerate(batch):
        j = int(rng.integers(0, len(batch) - 1))
        if j >= i:
            j += 1
        if batch[j].id == rec.id:
            raise TrainError(f"duplicate record id {rec.id!r} in batch")
        triplets.append(Triplet(rec, rec.docstring, batch[j].docstring, i, j))
    return triplets


# ---------------------------------------------------------------------------
# Dataset preparation

@dataclass
class TrainExample:
    pair: CodeDocPair
    code: CodeSample
    query: TokenSequence


def prepare_examples(
    pairs: Sequence[CodeDocPair], config: ModelConfig
) -> list[TrainExample]:
    """Tokenize and parse every pair once, up front."""
    return [
        TrainExample(p, code_sample(p.code, p.lang, config), tokenize_query(p.docstring))
        for p in pairs
    ]


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: ModelParams, cfg: TrainConfig | None = None) -> "AdamState":
        kwargs = {}
        if cfg is not None:
            kwargs = {"beta1": cfg.adam_beta1, "beta2": cfg.adam_beta2, "eps": cfg.adam_eps}
        return cls(
            m={n: np.zeros_like(t.data) for n, t in params.trainable()},
            v={n: np.zeros_like(t.data) for n, t in params.trainable()},
            **kwargs,
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update in place; the step counter advances by 1."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, tensor in params.trainable():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainError(f"non-finite gradient for tensor {name!r}")
        if g.shape != tensor.data.shape:
            raise TrainError(f"gradient shape {g.shape} != parameter shape "
                             f"{tensor.data.shape} for tensor {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(tensor.data.dtype)
        tensor.data -= update


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ---------------------------------------------------------------------------
# Epoch loop

@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    active_fraction: float
    wall_seconds: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "mean_loss": self.mean_loss,
                "active_fraction": self.active_fraction,
                "wall_seconds": self.wall_seconds,
            },
            sort_keys=True,
        )


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        if chunk.size >= 2:
            yield chunk


def train_epoch(
    dataset: Sequence[TrainExample],
    params: ModelParams,
    opt_state: AdamState,
    cfg: TrainConfig,
    epoch: int = 0,
) -> EpochStats:
    """One pass over the shuffled dataset; updates params in place."""
    if not dataset:
        raise TrainError("cannot train on an empty dataset")
    started = time.monotonic()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, epoch]))
    total_loss = 0.0
    total_triplets = 0
    active = 0
    for batch_idx in _batches(len(dataset), cfg.batch_size, rng):
        examples = [dataset[i] for i in batch_idx]
        triplets = sample_triplets(
            [ex.pair for ex in examples], seed=int(rng.integers(0, 2**31 - 1))
        )
        codes = collate_codes([ex.code for ex in examples], params)
        q_pos = collate_queries([ex.query for ex in examples], params)
        neg_rows = np.array([t.negative_index for t in triplets])
        q_neg = QueryBatch(q_pos.ids[neg_rows], q_pos.mask[neg_rows])

        drop_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        xc_pos, xd_pos = encode_batch(codes, q_pos, params, train_mode=True, rng=drop_rng)
        xc_neg, xd_neg = encode_batch(codes, q_neg, params, train_mode=True, rng=drop_rng)
        loss, per_triplet = batch_triplet_loss(
            xc_pos, xd_pos, xd_neg, beta=cfg.beta, x_code_neg=xc_neg
        )

        for _, tensor in params.trainable():
            tensor.grad = None
        loss.backward()
        grads = {
            name: tensor.grad
            for name, tensor in params.trainable()
            if tensor.grad is not None
        }
        clip_gradients(grads, cfg.clip_norm)
        adam_step(params, grads, opt_state, cfg.lr)

        total_loss += float(loss.item())
        total_triplets += len(triplets)
        active += int(np.count_nonzero(per_triplet > 0.0))

    if total_triplets == 0:
        raise TrainError("dataset yielded no usable batches (need >= 2 records)")
    return EpochStats(
        epoch=epoch,
        mean_loss=total_loss / total_triplets,
        active_fraction=active / total_triplets,
        wall_seconds=time.monotonic() - started,
    )


def fit(
    dataset: Sequence[TrainExample],
    params: ModelParams,
    cfg: TrainConfig,
    opt_state: AdamState | None = None,
    log_stream: IO[str] | None = None,
    validate: Callable[[ModelParams], float] | None = None,
    start_epoch: int = 0,
) -> list[EpochStats]:
    """Run the full schedule, logging one JSON line per epoch.

    With ``validate`` and ``cfg.patience`` set, stops once the validation
    score has not improved for ``patience`` consecutive epochs.
    """
    if opt_state is None:
        opt_state = AdamState.create(params, cfg)
    history: list[EpochStats] = []
    best = -np.inf
    stale = 0
    for epoch in range(start_epoch, cfg.epochs):
        stats = train_epoch(dataset, params, opt_state, cfg, epoch=epoch)
        for name, tensor in params.named():
            if not np.all(np.isfinite(tensor.data)):
                raise TrainError(f"tensor {name!r} became non-finite after epoch {epoch}")
        history.append(stats)
        if log_stream is not None:
            log_stream.write(stats.to_json() + "\n")
            log_stream.flush()
        if validate is not None and cfg.patience is not None:
            score = validate(params)
            if score > best:
                best, stale = score, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return history


# ---------------------------------------------------------------------------
# Checkpointing

def _blob_path(path: Path) -> Path:
    return path.with_suffix(".f32")


def save_checkpoint(
    params: ModelParams,
    opt_state: AdamState | None,
    cfg: TrainConfig | None,
    path: str | Path,
) -> None:
    """Write ``path`` (JSON manifest) and a sibling ``.f32`` blob file.

    Tensors are stored little-endian float32 in manifest order; the manifest
    records name, shape, and blob offset (in elements) for each tensor.
    """
    path = Path(path)
    tensors = []
    blobs: list[np.ndarray] = []
    offset = 0
    entries = [("param", n, t.data) for n, t in params.named()]
    if opt_state is not None:
        for name in sorted(opt_state.m):
            entries.append(("adam.m", name, opt_state.m[name]))
            entries.append(("adam.v", name, opt_state.v[name]))
    for kind, name, data in entries:
        flat = np.ascontiguousarray(data, dtype="<f4")
        tensors.append(
            {"kind": kind, "name": name, "shape": list(data.shape), "offset": offset}
        )
        blobs.append(flat.reshape(-1))
        offset += flat.size
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": params.config.to_dict(),
        "train_config": cfg.to_dict() if cfg is not None else None,
        "adam_step": opt_state.step if opt_state is not None else None,
        "code_vocab": params.code_vocab.index_to_token,
        "query_vocab": params.query_vocab.index_to_token,
        "node_keys": params.node_keys,
        "total_floats": offset,
        "tensors": tensors,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(_blob_path(path), "wb") as fh:
        for blob in blobs:
            fh.write(blob.tobytes())


def load_checkpoint(
    path: str | Path,
) -> tuple[ModelParams, AdamState | None, TrainConfig | None]:
    """Rebuild params (and optimizer state, if saved) bit-exactly."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint manifest: {exc}") from exc

    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version!r} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        model_cfg = ModelConfig.from_dict(manifest["model_config"])
        code_vocab = manifest["code_vocab"]
        query_vocab = manifest["query_vocab"]
        node_keys = manifest["node_keys"]
        tensor_index = manifest["tensors"]
        total = manifest["total_floats"]
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"incomplete checkpoint manifest: {exc}") from exc
    from .corpus import PAD_TOKEN, UNK_TOKEN

    for label, vocab_list in (("code", code_vocab), ("query", query_vocab)):
        if vocab_list[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise CheckpointError(f"{label} vocabulary lacks the reserved pad/unk entries")

    blob_file = _blob_path(path)
    try:
        raw = np.fromfile(blob_file, dtype="<f4")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint blob: {exc}") from exc
    if raw.size != total:
        raise CheckpointError(
            f"checkpoint blob holds {raw.size} floats, manifest expects {total} "
            "(truncated or corrupt file)"
        )

    from .corpus import Vocab

    params = ModelParams.create(
        model_cfg,
        Vocab(code_vocab[2:]),
        Vocab(query_vocab[2:]),
        node_keys,
        seed=0,
        dtype=np.float32,
    )
    by_name = params.by_name()
    expected = set(by_name)

    def read(entry: dict) -> np.ndarray:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + size > raw.size:
            raise CheckpointError(f"tensor {entry['name']!r} overruns the blob")
        return raw[start : start + size].reshape(shape).copy()

    seen: set[str] = set()
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for entry in tensor_index:
        kind, name = entry.get("kind"), entry.get("name")
        if kind == "param":
            tensor = by_name.get(name)
            if tensor is None:
                raise CheckpointError(f"checkpoint has unknown tensor {name!r}")
            data = read(entry)
            if data.shape != tensor.data.shape:
                raise CheckpointError(
                    f"tensor {name!r} has shape {data.shape}, expected {tensor.data.shape}"
                )
            tensor.data = data
            seen.add(name)
        elif kind == "adam.m":
            adam_m[name] = read(entry)
        elif kind == "adam.v":
            adam_v[name] = read(entry)
        else:
            raise CheckpointError(f"unknown tensor kind {kind!r} in manifest")
    missing = expected - seen
    if missing:
        raise CheckpointError(f"checkpoint is missing tensors: {sorted(missing)}")

    train_cfg = None
    if manifest.get("train_config") is not None:
        try:
            train_cfg = TrainConfig.from_dict(manifest["train_config"])
        except ConfigError as exc:
            raise CheckpointError(f"bad train config in checkpoint: {exc}") from exc

    opt_state = None
    if adam_m or adam_v:
        if set(adam_m) != set(adam_v):
            raise CheckpointError("optimizer state is missing moment tensors")
        trainable_names = {n for n, _ in params.trainable()}
        if set(adam_m) != trainable_names:
            raise CheckpointError(
                "optimizer state does not cover the trainable tensors exactly"
            )
        opt_state = AdamState(
            m=adam_m,
            v=adam_v,
            step=int(manifest.get("adam_step") or 0),
        )
        if train_cfg is not None:
            opt_state.beta1 = train_cfg.adam_beta1
            opt_state.beta2 = train_cfg.adam_beta2
            opt_state.eps = train_cfg.adam_eps
    return params, opt_state, train_cfg
