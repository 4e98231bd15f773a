import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from dcfa.data import make_dataset, warm_split
from dcfa.graphs import build_hetero_graph, build_knn_graph, normalize_adjacency, update_samples
from dcfa.synth import BlockModelSpec, generate

seeds = st.integers(0, 2**31 - 1)


def _sym(r, n, coarse=False):
    s = r.random((n, n))
    s = (s + s.T) / 2
    if coarse:
        s = np.round(s, 1)
    np.fill_diagonal(s, 1.0)
    return s


@given(st.integers(1, 9), seeds, st.booleans())
def test_knn_matches_brute_force(n, seed, coarse):
    sim = _sym(np.random.default_rng(seed), n, coarse)
    for k in range(n):
        g = build_knn_graph(sim, k)
        want = O.knn_neighbours(sim.tolist(), k)
        assert [set(np.flatnonzero(row).tolist()) for row in g.adjacency] == want
        assert np.all(g.adjacency.sum(axis=1) == k + 1)


def test_knn_extremes():
    sim = _sym(np.random.default_rng(0), 5)
    assert np.array_equal(build_knn_graph(sim, 0).adjacency, np.eye(5))
    assert np.array_equal(build_knn_graph(sim, 4).adjacency, np.ones((5, 5)))
    for k in (-1, 5):
        with pytest.raises(ValueError):
            build_knn_graph(sim, k)


@given(st.integers(2, 8), seeds, st.floats(0.01, 100))
def test_knn_scale_invariant(n, seed, c):
    sim = _sym(np.random.default_rng(seed), n)
    k = n // 2
    assert np.array_equal(build_knn_graph(sim, k).adjacency, build_knn_graph(sim * c, k).adjacency)


def _spectral_radius(m, iters=500):
    x = np.ones(len(m))
    lam = 0.0
    for _ in range(iters):
        y = m @ x
        lam = np.linalg.norm(y)
        if lam == 0:
            return 0.0
        x = y / lam
    return lam


@given(st.integers(1, 8), seeds)
def test_normalized_adjacency_spectral_radius(n, seed):
    r = np.random.default_rng(seed)
    a = np.maximum(np.eye(n), (r.random((n, n)) < 0.4).astype(float))
    assert _spectral_radius(normalize_adjacency(a)) <= 1 + 1e-9


def test_normalize_examples():
    assert np.array_equal(normalize_adjacency(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(normalize_adjacency(np.ones((2, 2))), 0.5, atol=1e-15)
    with pytest.raises(ValueError, match="zero-degree"):
        normalize_adjacency(np.array([[1.0, 0.0], [0.0, 0.0]]))


def _blocks(seed, nd=7, nm=5):
    return generate(BlockModelSpec(nd, nm, 2, 0.7, 0.1, 0.1), seed).dataset


@given(seeds, st.integers(1, 20))
def test_sample_sets_exclude_self_and_have_fixed_size(seed, s):
    ds = _blocks(seed % 11)
    g = build_hetero_graph(ds, warm_split(ds, 0.2, seed), s, seed)
    n = g.n_nodes
    assert g.samples.shape == (n, min(s, n - 1))
    for v, row in enumerate(g.samples):
        assert v not in row and len(set(row.tolist())) == len(row)
        assert np.all(np.diff(row) > 0)


def test_initial_samples_prefer_same_type():
    ds = _blocks(0)
    g = build_hetero_graph(ds, warm_split(ds, 0.2, 0), 4, 0)
    assert np.all(g.samples[: ds.n_drugs] < ds.n_drugs)
    # microbes have only 4 same-type peers
    assert np.all(g.samples[ds.n_drugs:] >= ds.n_drugs)
    g = build_hetero_graph(ds, warm_split(ds, 0.2, 0), 6, 0)
    assert np.sum(g.samples[ds.n_drugs:] < ds.n_drugs, axis=1).tolist() == [2] * ds.n_microbes


def test_saturated_samples_are_all_other_nodes():
    ds = make_dataset(np.array([[1, 0], [1, 1], [0, 1]]), np.eye(3), np.eye(2))
    g = build_hetero_graph(ds, warm_split(ds, 0.3, 0), 4, 0)
    for v in range(5):
        assert g.samples[v].tolist() == [u for u in range(5) if u != v]


def test_edgeless_graph():
    ds = make_dataset(np.zeros((3, 2)), np.eye(3), np.eye(2))
    from dcfa.data import SplitPlan

    empty = np.empty((0, 2), np.int64)
    plan = SplitPlan(empty, empty, ds.negatives(), empty)
    g = build_hetero_graph(ds, plan, 2, 0)
    assert len(g.edges) == 0 and np.all(g.degree() == 0)
    assert g.samples.shape == (5, 2)
    assert np.all(g.mean_operator() == 0)
    assert np.array_equal(g.gcn_operator(), np.eye(5))
    with pytest.raises(ValueError):
        build_hetero_graph(ds, plan, 0, 0)


def test_operators():
    ds = _blocks(3)
    g = build_hetero_graph(ds, warm_split(ds, 0.2, 0), 3, 0)
    m = g.mean_operator()
    deg = g.degree()
    np.testing.assert_allclose(m.sum(axis=1), (deg > 0).astype(float), atol=1e-15)
    a = g.gcn_operator()
    np.testing.assert_allclose(a, a.T, atol=0)
    for v in range(g.n_nodes):
        assert sorted(np.flatnonzero(m[v]).tolist()) == sorted(g.neighbors(v).tolist())


def test_edge_dump(tmp_path):
    ds = _blocks(2)
    g = build_hetero_graph(ds, warm_split(ds, 0.2, 0), 3, 0)
    p = tmp_path / "edges.tsv"
    g.dump_edges(p)
    rows = [tuple(map(int, ln.split("\t"))) for ln in p.read_text().splitlines()]
    assert rows == [tuple(e) for e in g.edges.tolist()]


@given(seeds, st.integers(1, 5), st.booleans())
def test_update_samples_matches_brute_force(seed, s, integral):
    r = np.random.default_rng(seed)
    ds = _blocks(seed % 13)
    g = build_hetero_graph(ds, warm_split(ds, 0.2, seed % 97), s, seed % 89)
    h = r.normal(size=(g.n_nodes, 3))
    u = r.normal(size=(3, 3))
    if integral:
        # integer scores force ties, which must resolve to the smaller index
        h, u = np.round(h), np.round(u)
    got = update_samples(g, h, u)
    nbrs = [g.neighbors(v).tolist() for v in range(g.n_nodes)]
    want = O.update_samples(h.tolist(), u.tolist(), g.samples.tolist(), nbrs)
    assert got.tolist() == want
    for v, row in enumerate(got):
        assert v not in row and len(row) == g.samples.shape[1]
