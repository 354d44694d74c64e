"""Benchmark the compiled hot-loop kernels against the NumPy reference.

Runs the two pretraining kernels (skip-gram negative sampling, random-walk
fill) on synthetic workloads sized like a small real corpus, checks that both
backends produce byte-identical outputs, and prints wall times plus speedup.

Usage: python benchmarks/bench_kernels.py [--pairs N] [--nodes N] [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cssam._kernels import pure

try:
    from cssam._kernels import _fast as fast
except ImportError:
    fast = None


def _sgns_workload(n_pairs: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    vocab, grams, dim, n_neg = 2000, 6000, 64, 5
    # every key bags 3-5 gram rows plus its own whole-token row
    offsets = [0]
    rows, coefs = [], []
    for key in range(vocab):
        n_grams = int(rng.integers(3, 6))
        for g in rng.integers(0, grams, size=n_grams):
            rows.append(vocab + int(g))
            coefs.append(1.0 / n_grams)
        rows.append(key)
        coefs.append(1.0)
        offsets.append(len(rows))
    return {
        "w_in": rng.standard_normal((vocab + grams, dim)).astype(np.float32) * 0.01,
        "w_out": np.zeros((vocab, dim), dtype=np.float32),
        "center_ids": rng.integers(0, vocab, size=n_pairs).astype(np.int32),
        "bag_offsets": np.asarray(offsets, dtype=np.int32),
        "bag_rows": np.asarray(rows, dtype=np.int32),
        "bag_coefs": np.asarray(coefs, dtype=np.float32),
        "contexts": rng.integers(0, vocab, size=n_pairs).astype(np.int32),
        "negatives": rng.integers(0, vocab, size=(n_pairs, n_neg)).astype(np.int32),
        "lr": 0.025,
    }


def _walk_workload(n_nodes: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    degree = 8
    indices = rng.integers(0, n_nodes, size=n_nodes * degree).astype(np.int32)
    indptr = (np.arange(n_nodes + 1) * degree).astype(np.int32)
    n_walks, t = n_nodes * 10, 20
    return {
        "indptr": indptr,
        "indices": indices,
        "starts": rng.integers(0, n_nodes, size=n_walks).astype(np.int32),
        "uniforms": rng.random((n_walks, t - 1)),
        "out": np.full((n_walks, t), -1, dtype=np.int32),
        "lengths": np.zeros(n_walks, dtype=np.int32),
    }


def _time_sgns(backend, work, repeats: int) -> tuple[float, dict]:
    best = float("inf")
    state = {}
    for _ in range(repeats):
        w_in = work["w_in"].copy()
        w_out = work["w_out"].copy()
        t0 = time.perf_counter()
        loss = backend.sgns_epoch(
            w_in, w_out, work["center_ids"], work["bag_offsets"], work["bag_rows"],
            work["bag_coefs"], work["contexts"], work["negatives"], work["lr"],
        )
        best = min(best, time.perf_counter() - t0)
        state = {"w_in": w_in, "w_out": w_out, "loss": loss}
    return best, state


def _time_walks(backend, work, repeats: int) -> tuple[float, dict]:
    best = float("inf")
    state = {}
    for _ in range(repeats):
        out = work["out"].copy()
        lengths = work["lengths"].copy()
        t0 = time.perf_counter()
        backend.walk_fill(
            work["indptr"], work["indices"], work["starts"], work["uniforms"],
            out, lengths,
        )
        best = min(best, time.perf_counter() - t0)
        state = {"out": out, "lengths": lengths}
    return best, state


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=50_000, help="skip-gram pairs per epoch")
    parser.add_argument("--nodes", type=int, default=2_000, help="graph nodes for the walk workload")
    parser.add_argument("--repeats", type=int, default=3, help="timed repetitions (best kept)")
    args = parser.parse_args()

    if fast is None:
        print("compiled backend not built; timing the reference implementation only")

    print(f"{'kernel':<12} {'workload':<22} {'pure':>10} {'compiled':>10} {'speedup':>9}")
    print("-" * 68)

    sgns_work = _sgns_workload(args.pairs)
    pure_t, pure_state = _time_sgns(pure, sgns_work, args.repeats)
    if fast is not None:
        fast_t, fast_state = _time_sgns(fast, sgns_work, args.repeats)
        assert np.array_equal(pure_state["w_in"], fast_state["w_in"]), "sgns w_in diverged"
        assert np.array_equal(pure_state["w_out"], fast_state["w_out"]), "sgns w_out diverged"
        assert abs(pure_state["loss"] - fast_state["loss"]) < 1e-6 * max(1.0, abs(pure_state["loss"]))
        ratio = f"{pure_t / fast_t:8.1f}x"
        fast_col = f"{fast_t * 1e3:8.1f}ms"
    else:
        ratio, fast_col = "       -", "         -"
    print(f"{'sgns_epoch':<12} {f'{args.pairs} pairs':<22} {pure_t * 1e3:8.1f}ms {fast_col} {ratio}")

    walk_work = _walk_workload(args.nodes)
    pure_t, pure_state = _time_walks(pure, walk_work, args.repeats)
    if fast is not None:
        fast_t, fast_state = _time_walks(fast, walk_work, args.repeats)
        assert np.array_equal(pure_state["out"], fast_state["out"]), "walks diverged"
        assert np.array_equal(pure_state["lengths"], fast_state["lengths"])
        ratio = f"{pure_t / fast_t:8.1f}x"
        fast_col = f"{fast_t * 1e3:8.1f}ms"
    else:
        ratio, fast_col = "       -", "         -"
    walk_desc = f"{args.nodes * 10} walks of {walk_work['out'].shape[1]}"
    print(f"{'walk_fill':<12} {walk_desc:<22} {pure_t * 1e3:8.1f}ms {fast_col} {ratio}")

    if fast is not None:
        print("\nbackends agree byte-for-byte on both kernels")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
