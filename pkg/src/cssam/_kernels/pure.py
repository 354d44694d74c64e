"""Reference NumPy implementation of the hot training kernels.

The compiled extension (``_fast``) mirrors these functions exactly; both
consume pre-generated randomness (shuffled pair order, negative-sample draws,
walk uniforms) so results are reproducible and the two backends agree. Per
update step, math runs in 64-bit and is stored back to the 32-bit matrices.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "pure"


def _log_sigmoid(y: float) -> float:
    if y >= 0.0:
        return -math.log1p(math.exp(-y))
    return y - math.log1p(math.exp(y))


def _sigmoid(x: float) -> float:
    if x > 60.0:
        return 1.0
    if x < -60.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(-x))


def sgns_epoch(
    w_in: np.ndarray,
    w_out: np.ndarray,
    center_ids: np.ndarray,
    bag_offsets: np.ndarray,
    bag_rows: np.ndarray,
    bag_coefs: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    lr: float,
) -> float:
    """One pass of skip-gram negative sampling over pre-shuffled pairs.

    Each center is a weighted bag of input rows (CSR layout indexed by
    ``center_ids``); gradients distribute over the bag by its coefficients.
    A negative equal to the pair's context row is skipped. Returns the summed
    loss over the epoch. Updates happen pair by pair; within one pair all
    reads precede all writes.
    """
    total = 0.0
    n_pairs = contexts.shape[0]
    n_neg = negatives.shape[1] if negatives.size else 0
    for p in range(n_pairs):
        cid = int(center_ids[p])
        lo, hi = int(bag_offsets[cid]), int(bag_offsets[cid + 1])
        rows = bag_rows[lo:hi]
        coefs = bag_coefs[lo:hi].astype(np.float64)
        v = (w_in[rows].astype(np.float64) * coefs[:, None]).sum(axis=0)
        grad_v = np.zeros_like(v)

        ctx = int(contexts[p])
        u = w_out[ctx].astype(np.float64)
        x = float(v @ u)
        g = _sigmoid(x) - 1.0
        total -= _log_sigmoid(x)
        grad_v += g * u
        w_out[ctx] = (u - lr * g * v).astype(np.float32)

        for k in range(n_neg):
            neg = int(negatives[p, k])
            if neg == ctx:
                continue
            un = w_out[neg].astype(np.float64)
            xn = float(v @ un)
            gn = _sigmoid(xn)
            total -= _log_sigmoid(-xn)
            grad_v += gn * un
            w_out[neg] = (un - lr * gn * v).astype(np.float32)

        for i in range(hi - lo):
            r = int(rows[i])
            w_in[r] = (
                w_in[r].astype(np.float64) - lr * coefs[i] * grad_v
            ).astype(np.float32)
    return total


def walk_fill(
    indptr: np.ndarray,
    indices: np.ndarray,
    starts: np.ndarray,
    uniforms: np.ndarray,
    out: np.ndarray,
    lengths: np.ndarray,
) -> None:
    """Fill ``out`` with random walks driven by pre-drawn uniforms.

    ``out`` is (n_walks, t), pre-filled with -1; ``uniforms`` is
    (n_walks, t-1). A walk stops early at a node without neighbors.
    """
    n_walks, t = out.shape
    for w in range(n_walks):
        cur = int(starts[w])
        out[w, 0] = cur
        steps = 1
        for s in range(t - 1):
            lo, hi = int(indptr[cur]), int(indptr[cur + 1])
            deg = hi - lo
            if deg == 0:
                break
            j = int(uniforms[w, s] * deg)
            if j >= deg:
                j = deg - 1
            cur = int(indices[lo + j])
            out[w, steps] = cur
            steps += 1
        lengths[w] = steps
