"""Pure-numpy implementations of the hot kernels.

These are the fallback path when the compiled extension is unavailable; the
compiled kernels in ``_ckernels`` implement the same contracts cell-by-cell.
"""

from __future__ import annotations

import numpy as np


def dense_cosine(query: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Cosine similarity of one query vector against every grid cell.

    query: (C,) with positive norm. feats: (C, h, w). Returns (h, w) float64.
    Cells with zero norm get similarity 0.0.
    """
    q = np.asarray(query, dtype=np.float64)
    f = np.asarray(feats, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("zero-norm query vector")
    dots = np.tensordot(q, f, axes=(0, 0))
    norms = np.sqrt(np.einsum("chw,chw->hw", f, f))
    sims = np.zeros_like(dots)
    nz = norms > 0.0
    sims[nz] = dots[nz] / (qn * norms[nz])
    return np.clip(sims, -1.0, 1.0)


def propagate_frame(
    tgt_feats: np.ndarray,
    ctx_feats: np.ndarray,
    ctx_probs: np.ndarray,
    temperature: float,
    radius: int,
    top_k: int,
) -> np.ndarray:
    """Propagate label distributions from context frames onto one target frame.

    tgt_feats: (C, h, w); ctx_feats: (K, C, h, w); ctx_probs: (K, L, h, w).
    For each target cell, candidates are context cells within Chebyshev
    ``radius`` of the same grid location; affinity is exp(cos_sim / T); the
    global top_k candidates (across all context frames) vote with normalized
    weights. Ties in similarity keep the earliest candidate in
    (frame, row-offset, col-offset) order. Returns (L, h, w) float64.
    """
    tgt = np.asarray(tgt_feats, dtype=np.float64)
    ctx = np.asarray(ctx_feats, dtype=np.float64)
    probs = np.asarray(ctx_probs, dtype=np.float64)
    K, C, h, w = ctx.shape
    L = probs.shape[1]

    tn = np.sqrt(np.einsum("chw,chw->hw", tgt, tgt))
    tn[tn == 0.0] = 1.0
    tgt_unit = tgt / tn
    cn = np.sqrt(np.einsum("kchw,kchw->khw", ctx, ctx))
    cn[cn == 0.0] = 1.0
    ctx_unit = ctx / cn[:, None]

    side = 2 * radius + 1
    M = K * side * side
    sims = np.full((M, h, w), -np.inf)
    # Candidate m = k*side*side + (di+r)*side + (dj+r); sims gathered by
    # shifting the context maps so sims[m, i, j] compares target (i, j) with
    # context (i+di, j+dj).
    shifted_probs = np.zeros((M, L, h, w))
    m = 0
    for k in range(K):
        for di in range(-radius, radius + 1):
            for dj in range(-radius, radius + 1):
                ti0, ti1 = max(0, -di), min(h, h - di)
                tj0, tj1 = max(0, -dj), min(w, w - dj)
                if ti0 < ti1 and tj0 < tj1:
                    si0, si1 = ti0 + di, ti1 + di
                    sj0, sj1 = tj0 + dj, tj1 + dj
                    sims[m, ti0:ti1, tj0:tj1] = np.einsum(
                        "chw,chw->hw",
                        tgt_unit[:, ti0:ti1, tj0:tj1],
                        ctx_unit[k, :, si0:si1, sj0:sj1],
                    )
                    shifted_probs[m, :, ti0:ti1, tj0:tj1] = probs[
                        k, :, si0:si1, sj0:sj1
                    ]
                m += 1

    kk = min(top_k, M)
    # Stable sort on -sim keeps the smallest candidate index among ties.
    order = np.argsort(-sims, axis=0, kind="stable")[:kk]
    top_sims = np.take_along_axis(sims, order, axis=0)
    valid = np.isfinite(top_sims)
    top_sims = np.where(valid, top_sims, -np.inf)
    shift = np.max(top_sims, axis=0, keepdims=True)
    weights = np.exp((top_sims - shift) / temperature)
    weights[~valid] = 0.0
    weights /= np.sum(weights, axis=0, keepdims=True)

    out = np.zeros((L, h, w))
    for r in range(kk):
        sel = np.take_along_axis(
            shifted_probs, order[r][None, None], axis=0
        )[0]
        out += weights[r] * sel
    return out
