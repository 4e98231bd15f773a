"""Pure-Python/numpy versions of the compiled selection kernels."""
from __future__ import annotations

import numpy as np


def _top(scores: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    # lexsort: last key is primary -> score descending, then index ascending
    order = np.lexsort((idx, -scores))
    return idx[order[:k]]


def knn_indices(sim: np.ndarray, k: int) -> np.ndarray:
    n = sim.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    if k == 0:
        return out
    cols = np.arange(n, dtype=np.int64)
    for i in range(n):
        keep = cols != i
        out[i] = _top(sim[i, keep], cols[keep], k)
    return out


def update_samples(hu, h, samples, indptr, indices) -> np.ndarray:
    n, s = samples.shape
    out = np.empty((n, s), dtype=np.int64)
    for i in range(n):
        pool = [samples[i]]
        for j in indices[indptr[i]:indptr[i + 1]]:
            pool.append(samples[j])
        cand = np.unique(np.concatenate(pool))
        cand = cand[cand != i]
        scores = h[cand] @ hu[i]
        out[i] = np.sort(_top(scores, cand, s))
    return out


def scatter_add_rows(idx, g, n):
    d = g.shape[1]
    key = (idx[:, None] * d + np.arange(d)).reshape(-1)
    return np.bincount(key, weights=g.reshape(-1), minlength=n * d).reshape(n, d)


def sampled_dot(a, b, samples):
    return np.einsum("nd,nsd->ns", a, b[samples])


def sampled_dot_backward(g, a, b, samples):
    n, s = samples.shape
    da = np.einsum("ns,nsd->nd", g, b[samples])
    db = scatter_add_rows(samples.reshape(-1), (g[:, :, None] * a[:, None, :]).reshape(n * s, -1), b.shape[0])
    return da, db


def _split_heads(x, samples, heads):
    n, s = samples.shape
    d = x.shape[1]
    return x[samples].reshape(n, s, heads, d // heads)


def attention_forward(q, k, v, bias, samples, heads, scale):
    n, s = samples.shape
    d = q.shape[1]
    q3 = q.reshape(n, heads, d // heads)
    logits = np.einsum("nmk,nsmk->nms", q3, _split_heads(k, samples, heads)) * scale
    if bias is not None:
        logits = logits + bias[:, None, :]
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    att = e / e.sum(axis=-1, keepdims=True)
    out = np.einsum("nms,nsmk->nmk", att, _split_heads(v, samples, heads)).reshape(n, d)
    return out, att


def attention_backward(gout, q, k, v, att, samples, scale):
    n, s = samples.shape
    heads = att.shape[1]
    d = q.shape[1]
    go = gout.reshape(n, heads, d // heads)
    q3 = q.reshape(n, heads, d // heads)
    kg, vg = _split_heads(k, samples, heads), _split_heads(v, samples, heads)
    datt = np.einsum("nmk,nsmk->nms", go, vg)
    dv = scatter_add_rows(samples.reshape(-1), np.einsum("nms,nmk->nsmk", att, go).reshape(n * s, d), v.shape[0])
    dl = att * (datt - (att * datt).sum(axis=-1, keepdims=True))
    dbias = dl.sum(axis=1)
    dl = dl * scale
    dq = np.einsum("nms,nsmk->nmk", dl, kg).reshape(n, d)
    dk = scatter_add_rows(samples.reshape(-1), np.einsum("nms,nmk->nsmk", dl, q3).reshape(n * s, d), k.shape[0])
    return dq, dk, dv, dbias
