import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coroplaque.evaluation import roc_auc
from coroplaque.gbt import (
    BoostConfig,
    Tree,
    TreeEnsemble,
    grow_tree,
    load_model,
    log_loss,
    predict_proba,
    save_model,
    sigmoid,
    split_gain,
    train,
)
from oracles import exhaustive_tree, nested_equal, tree_as_nested


def test_split_gain_hand_value():
    assert split_gain(2, 2, -2, 2, 1, 0) == pytest.approx(4 / 3, abs=1e-15)


def test_split_gain_zero_gradients():
    assert split_gain(0, 3, 0, 5, 1, 0.7) == -0.7


@given(st.floats(-10, 10), st.floats(0.01, 10), st.floats(0, 5))
def test_identical_halves_gain(g, h, lam):
    # Splitting a node into two identical halves never helps: the gain
    # equals -lam * g**2 / ((h + lam) * (2h + lam)), zero iff lam == 0.
    gain = split_gain(g, h, g, h, lam, 0.0)
    closed = 0.5 * (2 * g * g / (h + lam) - 4 * g * g / (2 * h + lam))
    assert gain == pytest.approx(closed, rel=1e-9, abs=1e-12)
    assert gain == pytest.approx(-lam * g * g / ((h + lam) * (2 * h + lam)), rel=1e-9, abs=1e-12)
    assert gain <= 1e-12
    if lam == 0:
        assert gain == pytest.approx(0.0, abs=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        BoostConfig(learning_rate=0)
    with pytest.raises(ValueError):
        BoostConfig(colsample=1.5)


def test_separable_data_reaches_auc_one():
    x = np.linspace(-1, 1, 20)
    x = x[x != 0]
    y = (x > 0).astype(float)
    model = train(x[:, None], y, BoostConfig(rounds=10, max_depth=1, colsample=1.0))
    assert roc_auc(predict_proba(model, x[:, None]), y) == 1.0


def test_constant_features_predict_prior():
    X = np.ones((12, 3))
    y = np.array([1, 0, 0, 0] * 3, dtype=float)
    model = train(X, y, BoostConfig(rounds=5, colsample=1.0))
    assert all(t.n_leaves() == 1 for t in model.trees)
    # Leaves shrink toward the prior; with one leaf per tree the margin stays uniform.
    p = predict_proba(model, X)
    assert np.ptp(p) == 0
    empty = TreeEnsemble(model.base_score, [], 3)
    assert predict_proba(empty, X)[0] == pytest.approx(0.25)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        train(np.zeros((4, 1)), np.ones(4))


def test_routing_and_missing_values():
    t = Tree()
    root, left, right = t.add_node(), t.add_node(), t.add_node()
    t.feature[root], t.threshold[root] = 0, 0.5
    t.left[root], t.right[root] = left, right
    t.value[left], t.value[right] = -1.0, 2.0
    model = TreeEnsemble(0.3, [t], 1)
    X = np.array([[0.1], [0.9], [np.nan]])
    p = predict_proba(model, X)
    assert p[0] == pytest.approx(sigmoid(np.array([0.3 - 1.0]))[0])
    assert p[1] == pytest.approx(sigmoid(np.array([0.3 + 2.0]))[0])
    assert p[2] == p[0]  # default-left
    t.default_left[root] = False
    assert predict_proba(model, X)[2] == p[1]
    with pytest.raises(ValueError):
        predict_proba(model, np.zeros((2, 2)))


def test_batch_equals_rows():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 4))
    y = (X[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(float)
    model = train(X, y, BoostConfig(rounds=15, seed=2))
    batch = predict_proba(model, X)
    rows = np.array([predict_proba(model, X[i])[0] for i in range(len(X))])
    np.testing.assert_array_equal(batch, rows)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_tree_matches_exhaustive_enumeration(data):
    n = data.draw(st.integers(2, 8))
    n_feat = data.draw(st.integers(1, 2))
    X = np.array(data.draw(st.lists(st.lists(st.integers(0, 4), min_size=n_feat, max_size=n_feat),
                                    min_size=n, max_size=n)), dtype=float)
    # Dyadic gradients and hessians keep every partial sum exact, so the
    # min-child-hessian boundary is decided identically by both routes.
    g = np.array(data.draw(st.lists(st.integers(-64, 64), min_size=n, max_size=n))) / 64
    h = np.array(data.draw(st.lists(st.integers(1, 16), min_size=n, max_size=n))) / 64
    depth = data.draw(st.integers(0, 2))
    lam = data.draw(st.sampled_from([0.0, 0.5, 1.0]))
    gamma = data.draw(st.sampled_from([0.0, 0.01]))
    mch = data.draw(st.sampled_from([0.0, 0.125]))
    cfg = BoostConfig(max_depth=depth, reg_lambda=lam, gamma=gamma, min_child_hessian=mch,
                      learning_rate=0.3, colsample=1.0)
    got = tree_as_nested(grow_tree(X, g, h, np.arange(n_feat), cfg))
    want = exhaustive_tree(X, g, h, depth, lam, gamma, mch, 0.3)
    assert nested_equal(got, want), (got, want)


def test_tree_structure_invariants():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 5))
    y = (X[:, 1] > 0).astype(float)
    model = train(X, y, BoostConfig(rounds=8, max_depth=3))
    for t in model.trees:
        for i, f in enumerate(t.feature):
            if f >= 0:
                assert t.left[i] > i and t.right[i] > i
                assert np.isfinite(t.threshold[i])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 60))
def test_training_loss_non_increasing(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = rng.integers(0, 2, n).astype(float)
    y[0], y[1] = 0, 1
    losses = []
    train(X, y, BoostConfig(rounds=15, max_depth=2, seed=seed),
          callback=lambda r, ens, p: losses.append(log_loss(y, p)))
    prior = y.mean()
    start = log_loss(y, np.full(n, prior))
    seq = [start] + losses
    assert all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))


def test_scaling_invariance_and_determinism():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(50, 4))
    y = (X[:, 2] - X[:, 0] + 0.3 * rng.normal(size=50) > 0).astype(float)
    cfg = BoostConfig(rounds=12, seed=11)
    a = train(X, y, cfg)
    Xs = X.copy()
    Xs[:, 2] *= 37.5
    b = train(Xs, y, cfg)
    for ta, tb in zip(a.trees, b.trees):
        assert ta.feature == tb.feature
        np.testing.assert_array_equal(ta.leaf_index(X), tb.leaf_index(Xs))
    np.testing.assert_allclose(predict_proba(a, X), predict_proba(b, Xs), rtol=0, atol=1e-15)
    c = train(X, y, cfg)
    assert [t.__dict__ for t in a.trees] == [t.__dict__ for t in c.trees]


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] > 0).astype(float)
    model = train(X, y, BoostConfig(rounds=5))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(predict_proba(model, X), predict_proba(back, X))
    assert back.config == model.config
