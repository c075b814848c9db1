import numpy as np
import pytest

from ipnsw import synth_gaussian
from ipnsw.dataset import Dataset
from ipnsw.oracle import (
    brute_topk,
    brute_topk_batch,
    decode_groundtruth,
    encode_groundtruth,
    load_groundtruth,
    mean_recall,
    mips_of_mips_oracle_recall,
    recall,
    save_groundtruth,
    two_stage_oracle_recall,
)
from ipnsw.simgraph import SimilarityKind

IP, ANG = SimilarityKind.INNER_PRODUCT, SimilarityKind.ANGULAR


def _sort_oracle(X, q, k, kind):
    X = np.asarray(X, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    scores = []
    for i, x in enumerate(X):
        s = float(np.dot(x, q))
        if kind is ANG:
            s /= float(np.sqrt(np.dot(x, x)) * np.sqrt(np.dot(q, q)))
        scores.append((-s, i))
    return [i for _, i in sorted(scores)[:k]]


def test_brute_example():
    ds = Dataset(np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]]))
    res = brute_topk(ds, [1.0, 0.0], 2)
    assert res.ids.tolist() == [2, 0]
    assert res.scores.tolist() == [2.0, 1.0]


def test_brute_k_equals_n_sorts_all():
    ds = synth_gaussian(50, 4, "iid", seed=1)
    q = np.ones(4)
    assert brute_topk(ds, q, 50).ids.tolist() == _sort_oracle(ds.items, q, 50, IP)


def test_brute_ties_by_id():
    ds = Dataset(np.array([[1.0, 0.0], [1.0, 5.0], [1.0, -5.0], [0.0, 1.0]]))
    assert brute_topk(ds, [1.0, 0.0], 3).ids.tolist() == [0, 1, 2]


@pytest.mark.parametrize("kind", [IP, ANG])
def test_brute_matches_sort_oracle(kind):
    ds = synth_gaussian(300, 8, ("lognormal", 0.5), seed=2)
    Q = synth_gaussian(100, 8, "iid", seed=3).items
    got = brute_topk_batch(ds, Q, 10, kind, chunk=17)
    for q, row in zip(Q, got):
        assert row.tolist() == _sort_oracle(ds.items, q, 10, kind)


def test_brute_errors():
    ds = synth_gaussian(5, 3, "iid", seed=0)
    with pytest.raises(ValueError):
        brute_topk(ds, np.ones(3), 6)
    with pytest.raises(ValueError):
        brute_topk(ds, np.ones(3), 0)
    with pytest.raises(ValueError):
        brute_topk(ds, np.ones(4), 1)
    with pytest.raises(ValueError):
        brute_topk(ds, np.zeros(3), 1, ANG)


def test_prefix_property(rng):
    for _ in range(200):
        n, d = int(rng.integers(2, 40)), int(rng.integers(1, 6))
        ds = Dataset(rng.integers(-3, 4, (n, d)).astype(float))
        q = rng.integers(-2, 3, d).astype(float)
        k = int(rng.integers(1, n))
        a = brute_topk(ds, q, k).ids
        b = brute_topk(ds, q, k + 1).ids
        assert b[:k].tolist() == a.tolist()


def test_recall_examples():
    truth = list(range(10))
    assert recall(truth, truth) == 1.0
    assert recall(list(range(10, 20)), truth) == 0.0
    assert recall(list(range(9)) + [42], truth) == 0.9
    assert recall([3, 1, 2], [1, 2, 3]) == recall([1, 2, 3], [3, 2, 1]) == 1.0
    with pytest.raises(ValueError):
        recall([1], [])
    assert mean_recall([[1, 2], [3, 4]], [[1, 2], [3, 5]]) == 0.75


def _nested_two_stage(X, Q, k, first):
    total = 0.0
    for q in Q:
        truth = set(_sort_oracle(X, q, k, IP))
        cand = set()
        for a in _sort_oracle(X, q, k, first):
            cand.update(_sort_oracle(X, X[a], k, IP))
        total += len(cand & truth) / k
    return total / len(Q)


def test_two_stage_matches_nested_loop():
    ds = synth_gaussian(400, 8, ("scaled-top", 0.05, 3.0), seed=5)
    Q = synth_gaussian(200, 8, "iid", seed=6).items
    X = ds.items.astype(np.float64)
    assert two_stage_oracle_recall(ds, Q, 10) == pytest.approx(_nested_two_stage(X, Q, 10, ANG), abs=1e-12)
    assert mips_of_mips_oracle_recall(ds, Q, 10) == pytest.approx(_nested_two_stage(X, Q, 10, IP), abs=1e-12)


def test_two_stage_colinear_two_items():
    ds = Dataset(np.array([[3.0, 0.0], [0.0, 1.0]]))
    assert two_stage_oracle_recall(ds, [[1.0, 0.0]], k=1) == 1.0


def test_equal_norms_make_oracles_equal():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 6))
    ds = Dataset(X / np.linalg.norm(X, axis=1, keepdims=True))
    Q = rng.standard_normal((50, 6))
    assert two_stage_oracle_recall(ds, Q, 5) == mips_of_mips_oracle_recall(ds, Q, 5)


def test_groundtruth_round_trip(tmp_path):
    ids = np.array([[3, 1], [0, 2]])
    buf = encode_groundtruth(ids)
    assert len(buf) == 8 + 16
    np.testing.assert_array_equal(decode_groundtruth(buf), ids)
    p = tmp_path / "gt.bin"
    save_groundtruth(ids, p, {"k": 2})
    back, key = load_groundtruth(p)
    np.testing.assert_array_equal(back, ids)
    assert key == {"k": 2}
    with pytest.raises(ValueError):
        decode_groundtruth(buf[:-1])
