# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; contracts mirror ``_pykernels`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()


def dense_cosine(query, feats):
    """Cosine similarity of one query vector against every grid cell."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef Py_ssize_t C = f.shape[0], h = f.shape[1], w = f.shape[2]
    cdef Py_ssize_t c, i, j
    cdef double qn = 0.0, dot, nrm, s
    for c in range(C):
        qn += q[c] * q[c]
    qn = sqrt(qn)
    if qn == 0.0:
        raise ValueError("zero-norm query vector")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            dot = 0.0
            nrm = 0.0
            for c in range(C):
                dot += q[c] * f[c, i, j]
                nrm += f[c, i, j] * f[c, i, j]
            if nrm > 0.0:
                s = dot / (qn * sqrt(nrm))
                if s > 1.0:
                    s = 1.0
                elif s < -1.0:
                    s = -1.0
                out[i, j] = s
    return out


def propagate_frame(tgt_feats, ctx_feats, ctx_probs, double temperature,
                    int radius, int top_k):
    """Label propagation onto one frame; see ``_pykernels.propagate_frame``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] tgt = np.ascontiguousarray(tgt_feats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=4] ctx = np.ascontiguousarray(ctx_feats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=4] probs = np.ascontiguousarray(ctx_probs, dtype=np.float64)
    cdef Py_ssize_t K = ctx.shape[0], C = ctx.shape[1]
    cdef Py_ssize_t h = ctx.shape[2], w = ctx.shape[3]
    cdef Py_ssize_t L = probs.shape[1]
    cdef Py_ssize_t i, j, k, c, di, dj, ci, cj, m, r, l, worst, kk
    cdef double tn, cn, dot, sim, wsum, shift, wt

    # Per-cell norms.
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tnorm = np.zeros((h, w))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cnorm = np.zeros((K, h, w))
    for i in range(h):
        for j in range(w):
            dot = 0.0
            for c in range(C):
                dot += tgt[c, i, j] * tgt[c, i, j]
            tnorm[i, j] = sqrt(dot) if dot > 0.0 else 1.0
    for k in range(K):
        for i in range(h):
            for j in range(w):
                dot = 0.0
                for c in range(C):
                    dot += ctx[k, c, i, j] * ctx[k, c, i, j]
                cnorm[k, i, j] = sqrt(dot) if dot > 0.0 else 1.0

    kk = top_k
    cdef Py_ssize_t M = K * (2 * radius + 1) * (2 * radius + 1)
    if kk > M:
        kk = M
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sel_sim = np.empty(kk)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sel_k = np.empty(kk, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sel_i = np.empty(kk, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sel_j = np.empty(kk, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = np.empty(kk)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((L, h, w))
    cdef Py_ssize_t nsel

    for i in range(h):
        for j in range(w):
            nsel = 0
            # Candidates visited in (frame, row-offset, col-offset) order so
            # strict-greater replacement keeps the earliest among ties.
            for k in range(K):
                for di in range(-radius, radius + 1):
                    ci = i + di
                    if ci < 0 or ci >= h:
                        continue
                    for dj in range(-radius, radius + 1):
                        cj = j + dj
                        if cj < 0 or cj >= w:
                            continue
                        dot = 0.0
                        for c in range(C):
                            dot += tgt[c, i, j] * ctx[k, c, ci, cj]
                        sim = dot / (tnorm[i, j] * cnorm[k, ci, cj])
                        if nsel < kk:
                            sel_sim[nsel] = sim
                            sel_k[nsel] = k
                            sel_i[nsel] = ci
                            sel_j[nsel] = cj
                            nsel += 1
                        else:
                            worst = 0
                            for m in range(1, kk):
                                if sel_sim[m] < sel_sim[worst]:
                                    worst = m
                            if sim > sel_sim[worst]:
                                sel_sim[worst] = sim
                                sel_k[worst] = k
                                sel_i[worst] = ci
                                sel_j[worst] = cj
            shift = sel_sim[0]
            for m in range(1, nsel):
                if sel_sim[m] > shift:
                    shift = sel_sim[m]
            wsum = 0.0
            for m in range(nsel):
                weights[m] = exp((sel_sim[m] - shift) / temperature)
                wsum += weights[m]
            for m in range(nsel):
                wt = weights[m] / wsum
                for l in range(L):
                    out[l, i, j] += wt * probs[sel_k[m], l, sel_i[m], sel_j[m]]
    return out
