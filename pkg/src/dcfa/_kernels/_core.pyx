# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: top-k selection, sampled attention and scatter-adds.

Selection kernels rank by (score descending, index ascending) so ties
resolve to the smaller index. Every function mirrors one in ``_fallback.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline bint _better(double s, i64 c, double t, i64 d) noexcept nogil:
    return s > t or (s == t and c < d)


cdef void _insert(double* bs, i64* bi, i64* filled, i64 cap, double s, i64 c) noexcept nogil:
    # keep the top `cap` (score, index) pairs sorted best-first
    cdef i64 n = filled[0]
    cdef i64 pos
    if n == cap and not _better(s, c, bs[n - 1], bi[n - 1]):
        return
    pos = n if n < cap else cap - 1
    while pos > 0 and _better(s, c, bs[pos - 1], bi[pos - 1]):
        bs[pos] = bs[pos - 1]
        bi[pos] = bi[pos - 1]
        pos -= 1
    bs[pos] = s
    bi[pos] = c
    if n < cap:
        filled[0] = n + 1


def knn_indices(double[:, ::1] sim, Py_ssize_t k):
    """Indices of the k most similar other nodes per row, best first."""
    cdef Py_ssize_t n = sim.shape[0]
    cdef Py_ssize_t i, j
    cdef i64 filled
    out = np.empty((n, k), dtype=np.int64)
    cdef i64[:, ::1] o = out
    bs_arr = np.empty(max(k, 1), dtype=np.float64)
    cdef double[::1] bs = bs_arr
    if k == 0:
        return out
    with nogil:
        for i in range(n):
            filled = 0
            for j in range(n):
                if j != i:
                    _insert(&bs[0], &o[i, 0], &filled, k, sim[i, j], j)
    return out


def update_samples(double[:, ::1] hu, double[:, ::1] h, i64[:, ::1] samples,
                   i64[::1] indptr, i64[::1] indices):
    """Re-select each node's attention samples from its own and its neighbours' sets.

    Candidates for node i are Smp(i) and Smp(j) for every neighbour j, never i
    itself; each is scored by <hu[i], h[c]> and the best ``s`` are kept.
    Returned rows are sorted by node index.
    """
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t d = h.shape[1]
    cdef Py_ssize_t s = samples.shape[1]
    cdef Py_ssize_t i, a, p, q, r
    cdef i64 c, j, filled
    cdef double acc
    out = np.empty((n, s), dtype=np.int64)
    cdef i64[:, ::1] o = out
    mark_arr = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] mark = mark_arr
    bs_arr = np.empty(max(s, 1), dtype=np.float64)
    cdef double[::1] bs = bs_arr
    if s == 0:
        return out
    with nogil:
        for i in range(n):
            filled = 0
            mark[i] = i
            for p in range(-1, indptr[i + 1] - indptr[i]):
                j = i if p < 0 else indices[indptr[i] + p]
                for q in range(s):
                    c = samples[j, q]
                    if mark[c] == i:
                        continue
                    mark[c] = i
                    acc = 0.0
                    for a in range(d):
                        acc = acc + hu[i, a] * h[c, a]
                    _insert(&bs[0], &o[i, 0], &filled, s, acc, c)
            # canonical order: ascending index
            for p in range(1, s):
                c = o[i, p]
                r = p
                while r > 0 and o[i, r - 1] > c:
                    o[i, r] = o[i, r - 1]
                    r -= 1
                o[i, r] = c
    return out


def scatter_add_rows(i64[::1] idx, double[:, ::1] g, Py_ssize_t n):
    """out[idx[p]] += g[p] for every p, accumulated in order."""
    cdef Py_ssize_t p, a, r
    cdef Py_ssize_t d = g.shape[1]
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for p in range(idx.shape[0]):
            r = idx[p]
            for a in range(d):
                o[r, a] += g[p, a]
    return out


def sampled_dot(double[:, ::1] a, double[:, ::1] b, i64[:, ::1] samples):
    """out[n, t] = <a[n], b[samples[n, t]]>."""
    cdef Py_ssize_t n = samples.shape[0], s = samples.shape[1], d = a.shape[1]
    cdef Py_ssize_t i, t, x
    cdef i64 c
    cdef double acc
    out = np.empty((n, s), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for t in range(s):
                c = samples[i, t]
                acc = 0.0
                for x in range(d):
                    acc = acc + a[i, x] * b[c, x]
                o[i, t] = acc
    return out


def sampled_dot_backward(double[:, ::1] g, double[:, ::1] a, double[:, ::1] b, i64[:, ::1] samples):
    cdef Py_ssize_t n = samples.shape[0], s = samples.shape[1], d = a.shape[1]
    cdef Py_ssize_t i, t, x
    cdef i64 c
    cdef double w
    da_arr = np.zeros((n, d), dtype=np.float64)
    db_arr = np.zeros((b.shape[0], d), dtype=np.float64)
    cdef double[:, ::1] da = da_arr
    cdef double[:, ::1] db = db_arr
    with nogil:
        for i in range(n):
            for t in range(s):
                c = samples[i, t]
                w = g[i, t]
                for x in range(d):
                    da[i, x] += w * b[c, x]
                    db[c, x] += w * a[i, x]
    return da_arr, db_arr


def attention_forward(double[:, ::1] q, double[:, ::1] k, double[:, ::1] v, bias,
                      i64[:, ::1] samples, Py_ssize_t heads, double scale):
    """Per-node, per-head softmax attention over sampled keys/values.

    Returns (out (n, d), weights (n, heads, s)).
    """
    cdef Py_ssize_t n = samples.shape[0], s = samples.shape[1], d = q.shape[1]
    cdef Py_ssize_t dk = d // heads
    cdef Py_ssize_t i, h, t, x, off
    cdef i64 c
    cdef double acc, mx, tot
    cdef bint has_bias = bias is not None
    cdef double[:, ::1] bb
    bb = bias if has_bias else np.zeros((1, 1))
    out = np.zeros((n, d), dtype=np.float64)
    att = np.empty((n, heads, s), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, :, ::1] w = att
    with nogil:
        for i in range(n):
            for h in range(heads):
                off = h * dk
                mx = -1e300
                for t in range(s):
                    c = samples[i, t]
                    acc = 0.0
                    for x in range(dk):
                        acc = acc + q[i, off + x] * k[c, off + x]
                    acc = acc * scale
                    if has_bias:
                        acc = acc + bb[i, t]
                    w[i, h, t] = acc
                    if acc > mx:
                        mx = acc
                tot = 0.0
                for t in range(s):
                    w[i, h, t] = exp(w[i, h, t] - mx)
                    tot = tot + w[i, h, t]
                for t in range(s):
                    w[i, h, t] = w[i, h, t] / tot
                    c = samples[i, t]
                    for x in range(dk):
                        o[i, off + x] += w[i, h, t] * v[c, off + x]
    return out, att


def attention_backward(double[:, ::1] gout, double[:, ::1] q, double[:, ::1] k, double[:, ::1] v,
                       double[:, :, ::1] att, i64[:, ::1] samples, double scale):
    """Gradients (dq, dk, dv, dbias) of :func:`attention_forward`."""
    cdef Py_ssize_t n = samples.shape[0], s = samples.shape[1], d = q.shape[1]
    cdef Py_ssize_t heads = att.shape[1]
    cdef Py_ssize_t dk = d // heads
    cdef Py_ssize_t i, h, t, x, off
    cdef i64 c
    cdef double acc, dot, dl
    dq_arr = np.zeros((n, d), dtype=np.float64)
    dk_arr = np.zeros((k.shape[0], d), dtype=np.float64)
    dv_arr = np.zeros((v.shape[0], d), dtype=np.float64)
    db_arr = np.zeros((n, s), dtype=np.float64)
    datt_arr = np.empty(max(s, 1), dtype=np.float64)
    cdef double[:, ::1] dq = dq_arr
    cdef double[:, ::1] dkk = dk_arr
    cdef double[:, ::1] dv = dv_arr
    cdef double[:, ::1] db = db_arr
    cdef double[::1] datt = datt_arr
    with nogil:
        for i in range(n):
            for h in range(heads):
                off = h * dk
                dot = 0.0
                for t in range(s):
                    c = samples[i, t]
                    acc = 0.0
                    for x in range(dk):
                        acc = acc + gout[i, off + x] * v[c, off + x]
                        dv[c, off + x] += att[i, h, t] * gout[i, off + x]
                    datt[t] = acc
                    dot = dot + att[i, h, t] * acc
                for t in range(s):
                    c = samples[i, t]
                    dl = att[i, h, t] * (datt[t] - dot)
                    db[i, t] += dl
                    dl = dl * scale
                    for x in range(dk):
                        dq[i, off + x] += dl * k[c, off + x]
                        dkk[c, off + x] += dl * q[i, off + x]
    return dq_arr, dk_arr, dv_arr, db_arr
