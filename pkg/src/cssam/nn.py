"""Differentiable building blocks.

All layers run batched on the autodiff tape: sequences as (batch, length,
dim) with boolean masks, graphs flattened into one node array with segment
ids. Every layer's gradient is checked against central finite differences in
the test suite via :func:`grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ModelError

NEG_INF = -1e30


# ---------------------------------------------------------------------------
# Masking helpers

def _mask_bias(mask: np.ndarray, dtype) -> Tensor:
    """Additive bias: 0 on real positions, a large negative on pad."""
    return ad.constant(((1.0 - mask) * NEG_INF).astype(dtype))


def masked_softmax(logits: Tensor, mask: np.ndarray | None, axis: int = -1) -> Tensor:
    """Softmax restricted to mask==1 positions (exact via detached shift)."""
    if mask is not None:
        logits = logits + _mask_bias(mask, logits.dtype)
    shift = ad.constant(np.max(logits.data, axis=axis, keepdims=True))
    e = ad.exp(logits - shift)
    return e / ad.tsum(e, axis=axis, keepdims=True)


def dropout(t: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not train or p <= 0.0 or rng is None:
        return t
    keep = (rng.random(t.shape) >= p).astype(t.data.dtype) / np.asarray(1.0 - p, dtype=t.data.dtype)
    return t * ad.constant(keep)


# ---------------------------------------------------------------------------
# Parameter containers

def _glorot(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (rng.random(shape) * 2.0 - 1.0).astype(dtype) * np.asarray(limit, dtype=dtype)


@dataclass
class LstmParams:
    w_x: Tensor  # (input_dim, 4*hidden), gate order: input, forget, cell, output
    w_h: Tensor  # (hidden, 4*hidden)
    b: Tensor    # (1, 4*hidden)

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[0]

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w_x", self.w_x
        yield f"{prefix}.w_h", self.w_h
        yield f"{prefix}.b", self.b

    @classmethod
    def create(cls, rng: np.random.Generator, input_dim: int, hidden: int, dtype=np.float32) -> "LstmParams":
        b = np.zeros((1, 4 * hidden), dtype=dtype)
        b[0, hidden : 2 * hidden] = 1.0  # forget-gate bias opens the gate early
        return cls(
            w_x=Tensor(_glorot(rng, (input_dim, 4 * hidden), dtype), requires_grad=True),
            w_h=Tensor(_glorot(rng, (hidden, 4 * hidden), dtype), requires_grad=True),
            b=Tensor(b, requires_grad=True),
        )


@dataclass
class GatParams:
    w: Tensor        # (F, F')
    a_dst: Tensor    # (F', 1) — attention term for the attending node
    a_src: Tensor    # (F', 1) — attention term for its neighbor
    leaky_slope: float = 0.2

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w
        yield f"{prefix}.a_dst", self.a_dst
        yield f"{prefix}.a_src", self.a_src

    @classmethod
    def create(cls, rng: np.random.Generator, in_dim: int, out_dim: int, leaky_slope: float = 0.2, dtype=np.float32) -> "GatParams":
        return cls(
            w=Tensor(_glorot(rng, (in_dim, out_dim), dtype), requires_grad=True),
            a_dst=Tensor(_glorot(rng, (out_dim, 1), dtype), requires_grad=True),
            a_src=Tensor(_glorot(rng, (out_dim, 1), dtype), requires_grad=True),
            leaky_slope=leaky_slope,
        )


@dataclass
class AlignParams:
    """Shared projection applied to both sides before the alignment dot product."""

    w: Tensor | None  # (d, d); None means the identity projection
    b: Tensor | None

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        if self.w is not None:
            yield f"{prefix}.w", self.w
        if self.b is not None:
            yield f"{prefix}.b", self.b

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, identity: bool = False, dtype=np.float32) -> "AlignParams":
        if identity:
            return cls(w=None, b=None)
        return cls(
            w=Tensor(_glorot(rng, (dim, dim), dtype), requires_grad=True),
            b=Tensor(np.zeros((1, 1, dim), dtype=dtype), requires_grad=True),
        )


@dataclass
class CressBlockParams:
    """One block: context encoder, alignment, fusion, cross-network, output."""

    enc_w: Tensor    # (3*d_in, d_enc) window-3 context encoder
    enc_b: Tensor
    align: AlignParams
    fuse_w: Tensor   # (2*(d_in+d_enc), d_in) back to the block input width
    fuse_b: Tensor
    cross_w: Tensor  # (d_in, d_in)
    cross_b: Tensor
    out_w: Tensor    # (d_in, d_out)
    out_b: Tensor

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.enc_w", self.enc_w
        yield f"{prefix}.enc_b", self.enc_b
        yield from self.align.named(f"{prefix}.align")
        yield f"{prefix}.fuse_w", self.fuse_w
        yield f"{prefix}.fuse_b", self.fuse_b
        yield f"{prefix}.cross_w", self.cross_w
        yield f"{prefix}.cross_b", self.cross_b
        yield f"{prefix}.out_w", self.out_w
        yield f"{prefix}.out_b", self.out_b

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        d_in: int,
        d_enc: int,
        d_out: int,
        align_identity: bool = False,
        dtype=np.float32,
    ) -> "CressBlockParams":
        d_u = d_in + d_enc
        return cls(
            enc_w=Tensor(_glorot(rng, (3 * d_in, d_enc), dtype), requires_grad=True),
            enc_b=Tensor(np.zeros((1, 1, d_enc), dtype=dtype), requires_grad=True),
            align=AlignParams.create(rng, d_u, identity=align_identity, dtype=dtype),
            fuse_w=Tensor(_glorot(rng, (2 * d_u, d_in), dtype), requires_grad=True),
            fuse_b=Tensor(np.zeros((1, 1, d_in), dtype=dtype), requires_grad=True),
            cross_w=Tensor(_glorot(rng, (d_in, d_in), dtype), requires_grad=True),
            cross_b=Tensor(np.zeros((1, 1, d_in), dtype=dtype), requires_grad=True),
            out_w=Tensor(_glorot(rng, (d_in, d_out), dtype), requires_grad=True),
            out_b=Tensor(np.zeros((1, 1, d_out), dtype=dtype), requires_grad=True),
        )


@dataclass
class CressParams:
    """The full stack; one parameter set serves both towers."""

    blocks: list[CressBlockParams] = field(default_factory=list)

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for i, blk in enumerate(self.blocks):
            yield from blk.named(f"{prefix}.block{i}")

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        emb_dim: int,
        d_enc: int,
        d_out: int,
        blocks: int = 4,
        align_identity: bool = False,
        dtype=np.float32,
    ) -> "CressParams":
        d_in = emb_dim + d_out  # block input is [first embedding ; residual sum]
        return cls(
            blocks=[
                CressBlockParams.create(rng, d_in, d_enc, d_out, align_identity, dtype)
                for _ in range(blocks)
            ]
        )


@dataclass
class PoolParams:
    w: Tensor  # (d, 1) per-position score

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, dtype=np.float32) -> "PoolParams":
        return cls(w=Tensor(_glorot(rng, (dim, 1), dtype), requires_grad=True))


# ---------------------------------------------------------------------------
# Sequence encoder

def lstm_encode(embedded: Tensor, mask: np.ndarray, params: LstmParams) -> Tensor:
    """Standard LSTM over (batch, steps, dim); pad steps carry state through.

    Returns per-step hidden states (batch, steps, hidden).
    """
    batch, steps, dim = embedded.shape
    if dim != params.input_dim:
        raise ModelError(
            f"sequence dim {dim} does not match the encoder input dim {params.input_dim}"
        )
    hid = params.hidden
    dtype = embedded.dtype
    h = ad.constant(np.zeros((batch, hid), dtype=dtype))
    c = ad.constant(np.zeros((batch, hid), dtype=dtype))
    outs: list[Tensor] = []
    for t in range(steps):
        x_t = embedded[:, t, :]
        gates = ad.matmul(x_t, params.w_x) + ad.matmul(h, params.w_h) + params.b
        i_g = ad.sigmoid(gates[:, 0 * hid : 1 * hid])
        f_g = ad.sigmoid(gates[:, 1 * hid : 2 * hid])
        g_g = ad.tanh(gates[:, 2 * hid : 3 * hid])
        o_g = ad.sigmoid(gates[:, 3 * hid : 4 * hid])
        c_new = f_g * c + i_g * g_g
        h_new = o_g * ad.tanh(c_new)
        m = ad.constant(mask[:, t : t + 1].astype(dtype))
        one = ad.constant(np.asarray(1.0, dtype=dtype))
        c = m * c_new + (one - m) * c
        h = m * h_new + (one - m) * h
        outs.append(ad.reshape(h, (batch, 1, hid)))
    return ad.concat(outs, axis=1)


# ---------------------------------------------------------------------------
# Graph attention

def gat_layer(
    node_feats: Tensor,
    edges: tuple[np.ndarray, np.ndarray, np.ndarray],
    params: GatParams,
) -> Tensor:
    """One graph-attention layer over a flat node array.

    ``edges`` is (src, dst, weight) with messages flowing src→dst; a
    weight-1 self-loop is added for every node, so each node attends over its
    in-neighbors and itself. Edge weights scale the exponentiated attention
    logits before normalization, keeping each node's weights on the simplex.
    """
    src, dst, weight = edges
    n = node_feats.shape[0]
    dtype = node_feats.dtype
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weight = np.asarray(weight, dtype=dtype)
    keep = src != dst  # explicit self-loops are replaced by the canonical one
    src, dst, weight = src[keep], dst[keep], weight[keep]
    loop = np.arange(n, dtype=np.int64)
    src = np.concatenate([src, loop])
    dst = np.concatenate([dst, loop])
    weight = np.concatenate([weight, np.ones(n, dtype=dtype)])

    wh = ad.matmul(node_feats, params.w)  # (n, F')
    score_dst = ad.matmul(wh, params.a_dst)  # (n, 1)
    score_src = ad.matmul(wh, params.a_src)
    logits = ad.leaky_relu(
        ad.gather_rows(score_dst, dst) + ad.gather_rows(score_src, src),
        params.leaky_slope,
    )  # (E, 1)

    # per-target shift keeps exp in range; softmax is shift-invariant
    shift = np.full((n, 1), NEG_INF, dtype=dtype)
    np.maximum.at(shift, dst, logits.data)
    numer = ad.exp(logits - ad.constant(shift[dst])) * ad.constant(weight[:, None])
    denom = ad.segment_sum(numer, dst, n)
    alpha = numer / ad.gather_rows(denom, dst)  # (E, 1)

    messages = alpha * ad.gather_rows(wh, src)
    return ad.elu(ad.segment_sum(messages, dst, n))


# ---------------------------------------------------------------------------
# Cross alignment (shared projection, bidirectional soft attention)

def cross_align(
    a: Tensor,
    b: Tensor,
    mask_a: np.ndarray,
    mask_b: np.ndarray,
    params: AlignParams,
) -> tuple[Tensor, Tensor]:
    """Align (B, la, d) against (B, lb, d); returns (a', b').

    a'_i is the b-side expectation under softmax of the projected dot
    products along b, and symmetrically for b'. Pad positions never receive
    weight; an all-pad opposite side is an error.
    """
    if np.any(mask_a.sum(axis=1) == 0) or np.any(mask_b.sum(axis=1) == 0):
        raise ModelError("cross alignment needs at least one real position per side")

    def project(x: Tensor) -> Tensor:
        if params.w is None:
            return x
        return ad.relu(ad.matmul(x, params.w) + params.b)

    fa, fb = project(a), project(b)
    logits = ad.matmul(fa, ad.swapaxes(fb, 1, 2))  # (B, la, lb)
    attn_ab = masked_softmax(logits, mask_b[:, None, :], axis=2)
    a_aligned = ad.matmul(attn_ab, b)
    attn_ba = masked_softmax(ad.swapaxes(logits, 1, 2), mask_a[:, None, :], axis=2)
    b_aligned = ad.matmul(attn_ba, a)
    return a_aligned, b_aligned


# ---------------------------------------------------------------------------
# CRESS block

def _window3(x: Tensor) -> Tensor:
    """Concatenate each position with its left/right neighbors (zero-padded)."""
    batch, steps, dim = x.shape
    zero = ad.constant(np.zeros((batch, 1, dim), dtype=x.dtype))
    left = ad.concat([zero, x[:, :-1, :]], axis=1) if steps > 1 else zero
    right = ad.concat([x[:, 1:, :], zero], axis=1) if steps > 1 else zero
    return ad.concat([left, x, right], axis=2)


def cress_block(
    a_tok: Tensor,
    b_tok: Tensor,
    a_prev: tuple[Tensor | None, Tensor | None],
    b_prev: tuple[Tensor | None, Tensor | None],
    mask_a: np.ndarray,
    mask_b: np.ndarray,
    params: CressParams,
    n: int,
    drop: Callable[[Tensor], Tensor] | None = None,
) -> tuple[Tensor, Tensor]:
    """Block ``n`` (1-based) applied to both sides with shared weights.

    The block input is [first embedding ; sum of the previous two outputs]
    (zeros for missing history). Per side: a window-3 context encoder, then
    bidirectional alignment over [input ; context], then fusion through the
    multiplicative cross-network x₁ = x₀ ⊙ (W·x₀' + b) + x₀' with x₀ the
    block input and x₀' the fused features, and a position-wise output
    projection. Pad positions are zeroed on the way in and out so appended
    padding never leaks into real positions.
    """
    if n < 1 or n > len(params.blocks):
        raise ModelError(f"block index {n} outside 1..{len(params.blocks)}")
    blk = params.blocks[n - 1]
    d_out = blk.out_w.shape[1]

    def block_input(
        first: Tensor, prev: tuple[Tensor | None, Tensor | None], mask: np.ndarray
    ) -> Tensor:
        o1, o2 = prev
        batch, steps, _ = first.shape
        if o1 is None and o2 is None:
            resid = ad.constant(np.zeros((batch, steps, d_out), dtype=first.dtype))
        elif o2 is None:
            resid = o1
        else:
            resid = o1 + o2
        x = ad.concat([first, resid], axis=2)
        x = x * ad.constant(mask[:, :, None].astype(first.dtype))
        if drop is not None:
            x = drop(x)
        return x

    def side(x: Tensor) -> Tensor:
        ctx = ad.relu(ad.matmul(_window3(x), blk.enc_w) + blk.enc_b)
        return ad.concat([x, ctx], axis=2)

    xa = block_input(a_tok, a_prev, mask_a)
    xb = block_input(b_tok, b_prev, mask_b)
    ua, ub = side(xa), side(xb)
    a_aligned, b_aligned = cross_align(ua, ub, mask_a, mask_b, blk.align)

    def fuse(x0: Tensor, u: Tensor, aligned: Tensor, mask: np.ndarray) -> Tensor:
        fused = ad.relu(ad.matmul(ad.concat([u, aligned], axis=2), blk.fuse_w) + blk.fuse_b)
        crossed = x0 * (ad.matmul(fused, blk.cross_w) + blk.cross_b) + fused
        out = ad.relu(ad.matmul(crossed, blk.out_w) + blk.out_b)
        return out * ad.constant(mask[:, :, None].astype(out.dtype))

    return fuse(xa, ua, a_aligned, mask_a), fuse(xb, ub, b_aligned, mask_b)


def cress_stack(
    a_emb: Tensor,
    b_emb: Tensor,
    mask_a: np.ndarray,
    mask_b: np.ndarray,
    params: CressParams,
    drop: Callable[[Tensor], Tensor] | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the full block stack; returns final per-position outputs per side."""
    if not params.blocks:
        raise ModelError("the block stack is empty")
    a_hist: tuple[Tensor | None, Tensor | None] = (None, None)
    b_hist: tuple[Tensor | None, Tensor | None] = (None, None)
    oa = ob = None
    for n in range(1, len(params.blocks) + 1):
        oa, ob = cress_block(a_emb, b_emb, a_hist, b_hist, mask_a, mask_b, params, n, drop)
        a_hist = (oa, a_hist[0])
        b_hist = (ob, b_hist[0])
    assert oa is not None and ob is not None
    return oa, ob


# ---------------------------------------------------------------------------
# Pooling

def attention_pool(h: Tensor, mask: np.ndarray, params: PoolParams) -> Tensor:
    """Score-weighted sum over non-pad positions: (B, T, d) → (B, d)."""
    if np.any(mask.sum(axis=1) == 0):
        raise ModelError("attention pooling needs at least one real position")
    scores = ad.matmul(h, params.w)  # (B, T, 1)
    alpha = masked_softmax(ad.swapaxes(scores, 1, 2), mask[:, None, :], axis=2)  # (B,1,T)
    return ad.reshape(ad.matmul(alpha, h), (h.shape[0], h.shape[2]))


def attention_pool_segments(
    h: Tensor, seg_ids: np.ndarray, num_segments: int, params: PoolParams
) -> Tensor:
    """Per-segment attention pooling over a flat (N, d) array → (S, d)."""
    scores = ad.matmul(h, params.w)  # (N, 1)
    shift = np.full((num_segments, 1), NEG_INF, dtype=h.dtype)
    np.maximum.at(shift, seg_ids, scores.data)
    numer = ad.exp(scores - ad.constant(shift[seg_ids]))
    denom = ad.segment_sum(numer, seg_ids, num_segments)
    alpha = numer / ad.gather_rows(denom, seg_ids)
    return ad.segment_sum(alpha * h, seg_ids, num_segments)


def masked_mean_pool(h: Tensor, mask: np.ndarray) -> Tensor:
    m = mask.astype(h.dtype)
    counts = m.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ModelError("mean pooling needs at least one real position")
    weighted = h * ad.constant(m[:, :, None])
    return ad.tsum(weighted, axis=1) * ad.constant((1.0 / counts).astype(h.dtype))


def masked_max_pool(h: Tensor, mask: np.ndarray) -> Tensor:
    if np.any(mask.sum(axis=1) == 0):
        raise ModelError("max pooling needs at least one real position")
    bias = _mask_bias(mask[:, :, None], h.dtype)
    return ad.tmax(h + bias, axis=1)


def mean_pool_segments(h: Tensor, seg_ids: np.ndarray, num_segments: int) -> Tensor:
    sums = ad.segment_sum(h, seg_ids, num_segments)
    counts = np.bincount(seg_ids, minlength=num_segments).astype(h.dtype)
    counts = np.maximum(counts, 1.0)
    return sums * ad.constant((1.0 / counts)[:, None])


# ---------------------------------------------------------------------------
# Finite-difference gradient checking

def grad_check(
    fn: Callable[[], Tensor],
    wrt: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``fn`` must rebuild the graph on each call and return a scalar; ``wrt``
    tensors should be float64 for meaningful tolerances.
    """
    for t in wrt:
        t.grad = None
    out = fn()
    out.backward()
    worst = 0.0
    for t in wrt:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        num = np.zeros_like(t.data)
        for idx in np.ndindex(*t.data.shape):
            saved = t.data[idx]
            t.data[idx] = saved + eps
            f_plus = fn().item()
            t.data[idx] = saved - eps
            f_minus = fn().item()
            t.data[idx] = saved
            num[idx] = (f_plus - f_minus) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(num)), 1e-6)
        rel = np.abs(analytic - num) / denom
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
