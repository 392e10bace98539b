import math
import os

import numpy as np
import pytest

import ifial

DATA = os.path.join(os.path.dirname(__file__), "..", "..", "data")


@pytest.fixture(scope="module")
def demo():
    return ifial.load_csv(os.path.join(DATA, "demo.csv"), os.path.join(DATA, "demo_schema.json"))


def test_load_csv(demo):
    assert demo.n == 160
    assert demo.d == 7
    assert demo.class_count == 2
    assert demo.feature_names[0] == "age"
    assert demo.missing_mask().sum() == 0


def test_inject_exact_count(demo):
    masked = ifial.inject(demo, "mcar", 0.25, seed=3)
    per_feature = masked.missing_mask().sum(axis=0)
    assert (per_feature == round(0.25 * demo.n)).all()
    # value-blind: same seed, same cells
    again = ifial.inject(demo, "mcar", 0.25, seed=3)
    assert (masked.missing_mask() == again.missing_mask()).all()


def test_partition_plan():
    plan = ifial.partition_plan([0.0] * 8, 4)
    assert plan["partitions"] == 3
    assert plan["windows"] == [[0, 1, 2, 3], [2, 3, 4, 5], [4, 5, 6, 7]]
    assert ifial.default_k(8) == 4
    assert ifial.default_k(21) == 11


def test_mask_pair():
    m1, m2 = ifial.mask_pair([0, 1, 0])
    assert m1.shape == (3, 3)
    assert (m1[:, 1] == -1e9).all()
    assert m1[:, [0, 2]].sum() == 0
    expected = np.outer([1, 0, 1], [1, 0, 1])
    assert (m2 == expected).all()


def test_masked_attention_matches_numpy():
    rng = np.random.default_rng(5)
    L, D, H = 4, 6, 2
    x = rng.normal(size=(L, D))
    wq, wk, wv, wo = (rng.normal(size=(D, D)) for _ in range(4))
    missing = [0, 0, 1, 0]

    got = ifial.masked_attention(x, missing, wq, wk, wv, wo, num_heads=H)

    m1, m2 = ifial.mask_pair(missing)
    hd = D // H
    concat = np.zeros((L, D))
    for h in range(H):
        sl = slice(h * hd, (h + 1) * hd)
        q, k, v = x @ wq[:, sl], x @ wk[:, sl], x @ wv[:, sl]
        scores = q @ k.T / math.sqrt(hd) + m1
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        s = e / e.sum(axis=1, keepdims=True)
        concat[:, sl] = (s * m2) @ v
    want = concat @ wo
    assert np.allclose(got, want, atol=1e-12)
    # masked token contributes nothing and receives nothing
    assert (got[2] == 0).all()


def test_train_predict_roundtrip(demo, tmp_path):
    masked = ifial.inject(demo, "mcar", 0.2, seed=1)
    model = ifial.train(
        masked,
        k=4,
        seed=7,
        model={"model_dim": 16, "num_heads": 2, "ffn_dim": 32, "dropout": 0.1},
        train={"max_epochs": 12, "patience": 6, "batch_size": 16},
    )
    probs = model.predict(masked)
    assert probs.shape == (demo.n, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)

    labels = list(demo.labels)
    assert ifial.auc(list(probs[:, 1]), labels) > 0.8

    path = tmp_path / "model.json"
    model.save(str(path))
    again = ifial.load_model(str(path)).predict(masked)
    assert (probs == again).all()


def test_auc():
    assert ifial.auc([0.2, 0.9, 0.4, 0.7], [1, 1, 0, 0]) == 0.5
    assert ifial.auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_stratified_folds():
    labels = [0, 1] * 15
    folds = ifial.stratified_folds(labels, 5, seed=2)
    sizes = np.bincount(folds, minlength=5)
    assert sizes.max() - sizes.min() <= 1
    for c in (0, 1):
        per = np.bincount([folds[i] for i in range(30) if labels[i] == c], minlength=5)
        assert per.max() - per.min() <= 1


def test_cost_ratio():
    assert ifial.cost_ratio(8, 4) == 0.75
    assert ifial.cost_ratio(8, 5) == 75 / 64
    assert ifial.cost_ratio(8, 8) == 1.0
