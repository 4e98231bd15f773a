"""Reference implementations written with plain loops and ``math``.

Nothing here imports the package; each function follows the defining
formula as literally as possible so that it can serve as an oracle.
"""
import itertools
import math


def matmul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def add_rows(a, b):
    return [[x + y for x, y in zip(r, s)] for r, s in zip(a, b)]


def relu(a):
    return [[max(0.0, x) for x in r] for r in a]


def softmax(row):
    mx = max(row)
    e = [math.exp(x - mx) for x in row]
    tot = sum(e)
    return [x / tot for x in e]


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def layer_norm(row, eps=1e-5):
    mu = sum(row) / len(row)
    var = sum((x - mu) ** 2 for x in row) / len(row)
    return [(x - mu) / math.sqrt(var + eps) for x in row]


# ------------------------------------------------------------------- graphs


def knn_neighbours(sim, k):
    """Row i -> {i} plus the k best other columns (ties to the smaller index)."""
    n = len(sim)
    out = []
    for i in range(n):
        others = sorted((j for j in range(n) if j != i), key=lambda j: (-sim[i][j], j))
        out.append({i, *others[:k]})
    return out


def sym_normalise(adj):
    n = len(adj)
    deg = [sum(r) for r in adj]
    return [[adj[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(n)] for i in range(n)]


def gcn(a_hat, x, weights):
    h = x
    for w in weights:
        h = relu(matmul(a_hat, matmul(h, w)))
    return h


# ---------------------------------------------------------------- attention


def attention(h, samples, wq, wk, wv, wo, heads, u=None, residual=True):
    """Per node and head: softmax over sampled keys, concat, project, add, normalise."""
    n, d = len(h), len(h[0])
    dk = d // heads
    q, k, v = matmul(h, wq), matmul(h, wk), matmul(h, wv)
    hu = matmul(h, u) if u is not None else None
    out = []
    for i in range(n):
        cat = []
        for hd in range(heads):
            cols = range(hd * dk, (hd + 1) * dk)
            logits = []
            for c in samples[i]:
                s = sum(q[i][x] * k[c][x] for x in cols) / math.sqrt(dk)
                if hu is not None:
                    s += sum(hu[i][x] * h[c][x] for x in range(d)) / math.sqrt(d)
                logits.append(s)
            w = softmax(logits)
            cat.extend(sum(w[t] * v[c][x] for t, c in enumerate(samples[i])) for x in cols)
        out.append(cat)
    proj = matmul(out, wo)
    if not residual:
        return proj
    return [layer_norm([a + b for a, b in zip(h[i], proj[i])]) for i in range(n)]


def gnn(h, neighbours, w_msg, w_comb):
    n, d = len(h), len(h[0])
    msg = matmul(h, w_msg)
    out = []
    for i in range(n):
        nb = neighbours[i]
        hm = [max(0.0, sum(msg[j][x] for j in nb) / len(nb)) if nb else 0.0 for x in range(d)]
        out.append(h[i] + hm)
    return relu(matmul(out, w_comb))


def update_samples(h, u, samples, neighbours):
    """Brute force: score every candidate of the pooled sets, keep the best s."""
    hu = matmul(h, u)
    out = []
    for i, own in enumerate(samples):
        pool = set(own)
        for j in neighbours[i]:
            pool |= set(samples[j])
        pool.discard(i)
        scored = sorted(pool, key=lambda c: (-sum(a * b for a, b in zip(hu[i], h[c])), c))
        out.append(sorted(scored[:len(own)]))
    return out


# --------------------------------------------------------- losses and fusion


def hinge(z1, z2, gamma, close=False):
    tot = 0.0
    for a, b in zip(z1, z2):
        dist = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
        tot += max(0.0, dist - gamma) if close else max(0.0, gamma - dist)
    return tot / len(z1)


def bsam(z1, z2, w_phi, b_phi, w_psi, b_psi, w_om1, w_om2, v):
    out, alphas = [], []
    for a, b in zip(z1, z2):
        h1 = [math.tanh(x + bb) for x, bb in zip(matmul([a], w_phi)[0], b_phi)]
        h2 = [math.tanh(x + bb) for x, bb in zip(matmul([b], w_psi)[0], b_psi)]
        joint = [h1 + h2]
        e1 = matmul(relu(matmul(joint, w_om1)), v)[0][0]
        e2 = matmul(relu(matmul(joint, w_om2)), v)[0][0]
        a1, a2 = softmax([e1, e2])
        alphas.append((a1, a2))
        out.append([a1 * x + a2 * y for x, y in zip(a, b)])
    return out, alphas


def concat_reduce(z1, z2, w_r):
    return matmul([a + b for a, b in zip(z1, z2)], w_r)


def mlp(f_drug, f_microbe, pairs, w1, b1, w2, b2, w3, b3):
    z = []
    for i, j in pairs:
        x = [f_drug[i] + f_microbe[j]]
        h = relu([[p + q for p, q in zip(matmul(x, w1)[0], b1)]])
        h = relu([[p + q for p, q in zip(matmul(h, w2)[0], b2)]])
        z.append(matmul(h, w3)[0][0] + b3[0])
    return z


def weighted_bce(z, y, w, reduction="mean"):
    # log sigma(z) and log(1 - sigma(z)) evaluated without cancellation
    def log_sig(t):
        return -math.log1p(math.exp(-t)) if t >= 0 else t - math.log1p(math.exp(t))

    terms = [-(w * yi * log_sig(zi) + (1 - yi) * log_sig(-zi)) for zi, yi in zip(z, y)]
    return sum(terms) if reduction == "sum" else sum(terms) / len(terms)


# ------------------------------------------------------------------ metrics


def auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def aupr(scores, labels):
    n_pos = sum(1 for y in labels if y)
    area, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y)
        n_at = sum(1 for s in scores if s >= t)
        recall = tp / n_pos
        area += (recall - prev_recall) * (tp / n_at)
        prev_recall = recall
    return area


def confusion(scores, labels, threshold=0.5):
    tp = sum(1 for s, y in zip(scores, labels) if s >= threshold and y)
    fp = sum(1 for s, y in zip(scores, labels) if s >= threshold and not y)
    fn = sum(1 for s, y in zip(scores, labels) if s < threshold and y)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def aggregate(score_rows, top_k, top_fraction):
    n_c = len(score_rows[0])
    freq = [0] * n_c
    for row in score_rows:
        best = sorted(range(n_c), key=lambda c: (-row[c], c))[:top_k]
        for c in best:
            freq[c] += 1
    mean = [sum(r[c] for r in score_rows) / len(score_rows) for c in range(n_c)]
    seen = sorted((c for c in range(n_c) if freq[c]), key=lambda c: (-freq[c], -mean[c], c))
    keep = max(1, math.ceil(top_fraction * len(seen)))
    return [(c, freq[c], mean[c]) for c in seen[:keep]]


def all_subsets(n, k):
    return list(itertools.combinations(range(n), k))
