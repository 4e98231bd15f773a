import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcfa.data import (
    DataError,
    cold_start_split,
    gaussian_profile_similarity,
    load_dataset,
    make_dataset,
    read_split,
    training_similarity,
    warm_split,
    write_matrix,
    write_split,
)
from dcfa.graphs import build_hetero_graph
from dcfa.synth import BlockModelSpec, generate


def _write(tmp_path, assoc, dsim, msim):
    nd, nm = assoc.shape
    dn, mn = [f"d{i}" for i in range(nd)], [f"m{j}" for j in range(nm)]
    paths = tmp_path / "a.tsv", tmp_path / "d.tsv", tmp_path / "m.tsv"
    write_matrix(paths[0], assoc, dn, mn)
    write_matrix(paths[1], dsim, dn, dn)
    write_matrix(paths[2], msim, mn, mn)
    return paths


def test_toy_dataset_loads(toy):
    assert (toy.n_drugs, toy.n_microbes) == (8, 5)
    assert toy.associations.sum() == 17
    assert toy.drug_names[0] == "ciprofloxacin"
    np.testing.assert_array_equal(np.diag(toy.drug_sim), 1.0)


def test_identity_similarity_without_positives(tmp_path):
    ds = load_dataset(*_write(tmp_path, np.zeros((2, 2)), np.eye(2), np.eye(2)))
    assert len(ds.positives()) == 0 and len(ds.negatives()) == 4


def test_half_entry_rejected(tmp_path):
    a = np.array([[0, 0.5], [1, 0]])
    with pytest.raises(DataError, match="0/1"):
        load_dataset(*_write(tmp_path, a, np.eye(2), np.eye(2)))


@pytest.mark.parametrize("bad,msg", [
    (np.array([[1.0, 0.5], [0.4, 1.0]]), "symmetric"),
    (np.array([[1.0, 1.1], [1.1, 1.0]]), "outside"),
    (np.eye(3), "3, 3"),
])
def test_bad_similarity_rejected(bad, msg):
    with pytest.raises(DataError, match=msg):
        make_dataset(np.zeros((2, 2)), bad, np.eye(2))


def test_small_asymmetry_is_averaged():
    s = np.array([[1.0, 0.5 + 5e-7], [0.5, 1.0]])
    ds = make_dataset(np.zeros((2, 1)), s, np.eye(1))
    assert ds.drug_sim[0, 1] == ds.drug_sim[1, 0]


def test_name_mismatch_and_missing_file(tmp_path):
    a, d, m = _write(tmp_path, np.eye(2), np.eye(2), np.eye(2))
    write_matrix(d, np.eye(2), ["x", "y"], ["x", "y"])
    with pytest.raises(DataError, match="names"):
        load_dataset(a, d, m)
    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path / "nope.tsv")


def test_ragged_row_reports_line(tmp_path):
    p = tmp_path / "a.tsv"
    p.write_text("\tm0\tm1\nd0\t1\t0\nd1\t1\n")
    with pytest.raises(DataError, match=":3:"):
        load_dataset(p)


def test_gaussian_fallback(tmp_path):
    a = np.array([[1, 0, 1], [1, 0, 1], [0, 1, 0]])
    paths = _write(tmp_path, a, np.eye(3), np.eye(3))
    ds = load_dataset(paths[0])
    np.testing.assert_allclose(ds.drug_sim, gaussian_profile_similarity(a))
    assert ds.drug_sim[0, 1] == 1.0 and ds.drug_sim[0, 2] < 1.0
    # bandwidth 1 / mean squared norm: mean(|row|^2) = 5/3, distance^2 = 3
    assert ds.drug_sim[0, 2] == pytest.approx(np.exp(-3 / (5 / 3)), abs=1e-15)
    assert np.array_equal(gaussian_profile_similarity(np.zeros((2, 3))), np.ones((2, 2)))


def test_training_similarity_ignores_held_out_pairs(toy):
    plan = warm_split(toy, 0.3, 0)
    ds = training_similarity(toy, plan)
    masked = toy.associations.copy()
    masked[plan.test_pos[:, 0], plan.test_pos[:, 1]] = 0
    np.testing.assert_array_equal(ds.drug_sim, gaussian_profile_similarity(masked))
    np.testing.assert_array_equal(ds.associations, toy.associations)


def test_warm_split_arithmetic():
    a = np.zeros((20, 10), dtype=int)
    a.flat[::2] = 1
    ds = make_dataset(a, np.eye(20), np.eye(10))
    plan = warm_split(ds, 0.1, 3)
    assert len(plan.test_pos) == 10 and len(plan.test_neg) == 10
    assert len(plan.train_pos) == 90 and len(plan.train_neg) == 90
    assert len(warm_split(ds, 0.999, 3).train_pos) == 1
    allneg = warm_split(ds, 0.1, 3, test_negatives="all")
    assert len(allneg.test_neg) == 10
    with pytest.raises(ValueError):
        warm_split(ds, 0.1, 3, test_negatives="half")
    with pytest.raises(ValueError):
        warm_split(ds, 1.0, 3)


def test_warm_split_needs_two_positives():
    a = np.zeros((3, 3))
    a[0, 0] = 1
    with pytest.raises(DataError):
        warm_split(make_dataset(a, np.eye(3), np.eye(3)), 0.1, 0)


def _sets(plan):
    return [set(map(tuple, x.tolist())) for x in (plan.train_pos, plan.test_pos, plan.train_neg, plan.test_neg)]


def _small(seed):
    return generate(BlockModelSpec(12, 8, 2, 0.7, 0.1, 0.1), seed).dataset


@given(st.integers(0, 10_000), st.floats(0.05, 0.9), st.sampled_from(["balanced", "all"]))
def test_warm_split_partitions(seed, frac, negs):
    ds = _small(seed % 7)
    plan = warm_split(ds, frac, seed, negs)
    sets = _sets(plan)
    assert sum(map(len, sets)) == len(set().union(*sets))
    pos = set(map(tuple, ds.positives().tolist()))
    assert sets[0] | sets[1] == pos
    assert not (sets[2] | sets[3]) & pos
    g = build_hetero_graph(ds, plan, 3, seed)
    edges = {(int(u), int(v) - ds.n_drugs) for u, v in g.edges}
    assert not edges & sets[1]


@given(st.integers(0, 10_000), st.sampled_from(["drug", "microbe"]), st.floats(0.05, 0.3), st.booleans())
def test_cold_start_isolates_held_out_nodes(seed, side, frac, per_node):
    ds = _small(seed % 5)
    axis = 0 if side == "drug" else 1
    for plan in cold_start_split(ds, side, frac, seed, per_node=per_node):
        held = set(plan.held_out)
        for arr in (plan.train_pos, plan.train_neg):
            assert not held & set(arr[:, axis].tolist())
        for arr in (plan.test_pos, plan.test_neg):
            assert set(arr[:, axis].tolist()) <= held
        # balanced unless the held-out nodes have too few non-associated pairs
        held_neg = int(np.isin(ds.negatives()[:, axis], plan.held_out).sum())
        assert len(plan.test_neg) == min(len(plan.test_pos), held_neg)
        sets = _sets(plan)
        assert sum(map(len, sets)) == len(set().union(*sets))
        g = build_hetero_graph(ds, plan, 3, 0)
        offset = 0 if side == "drug" else ds.n_drugs
        assert all(g.degree()[offset + v] == 0 for v in held)


def test_cold_start_count_uses_ceiling():
    ds = _small(0)
    (plan,) = cold_start_split(ds, "drug", 0.02, 0)
    assert len(plan.held_out) == 1
    (plan,) = cold_start_split(ds, "microbe", 0.3, 0)
    assert len(plan.held_out) == 3
    assert len(cold_start_split(ds, "microbe", 0.3, 0, per_node=True)) == 3


def test_cold_start_flags_isolated_node():
    a = np.array([[1, 0, 1], [1, 0, 0], [0, 0, 1]])
    ds = make_dataset(a, np.eye(3), np.eye(3))
    plans = [p for s in range(20) for p in cold_start_split(ds, "microbe", 0.2, s)]
    flagged = [p for p in plans if p.held_out == (1,)]
    assert flagged and all(p.degenerate and len(p.test_pos) == 0 for p in flagged)


def test_cold_start_argument_errors(toy):
    with pytest.raises(ValueError):
        cold_start_split(toy, "disease", 0.1, 0)
    with pytest.raises(ValueError):
        cold_start_split(toy, "drug", 0.0, 0)


def test_split_is_reproducible_after_reload(tmp_path, toy):
    from dcfa.data import toy_paths

    again = load_dataset(*toy_paths())
    for a, b in zip(_sets(warm_split(toy, 0.2, 9)), _sets(warm_split(again, 0.2, 9))):
        assert a == b
    p1 = warm_split(toy, 0.2, 9)
    p2 = warm_split(again, 0.2, 9)
    for k in ("train_pos", "test_pos", "train_neg", "test_neg"):
        assert np.array_equal(getattr(p1, k), getattr(p2, k))


def test_split_file_round_trip(tmp_path, toy):
    for plan in [warm_split(toy, 0.2, 1), *cold_start_split(toy, "drug", 0.25, 2)]:
        path = tmp_path / "split.tsv"
        write_split(plan, path)
        back = read_split(path)
        for k in ("train_pos", "test_pos", "train_neg", "test_neg"):
            assert np.array_equal(getattr(plan, k), getattr(back, k))
        assert (back.mode, back.seed, back.held_out) == (plan.mode, plan.seed, plan.held_out)


def test_split_file_unknown_label(tmp_path):
    p = tmp_path / "s.tsv"
    p.write_text("0\t1\tvalidation\n")
    with pytest.raises(DataError):
        read_split(p)
