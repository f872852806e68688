from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crsfl.splitnn import (MonolithicNet, SplitModel, backward_client, batches, cross_entropy,
                           evaluate, fedavg, forward_client, forward_server_and_backward,
                           init_params, load_checkpoint, param_count, save_checkpoint,
                           split_train_step)
from crsfl.verify import check_gradients, check_split_equivalence, finite_difference_grads

DIMS = (6, 10, 10, 10, 4)


def model(seed=0, dims=DIMS, cut=2):
    return SplitModel.from_params(dims, cut, init_params(dims, seed))


def test_default_cut_splits_two_and_two():
    m = model()
    assert m.client.n_layers == 2 and m.server.n_layers == 2 and m.cut_width == 10


def test_bad_cut_or_params_rejected():
    with pytest.raises(ValueError):
        SplitModel.from_params(DIMS, 0, init_params(DIMS, 0))
    with pytest.raises(ValueError):
        SplitModel.from_params(DIMS, 4, init_params(DIMS, 0))
    with pytest.raises(ValueError):
        SplitModel.from_params(DIMS, 2, init_params(DIMS, 0)[:-2])


def test_zero_weights_give_zero_activations():
    params = [np.zeros_like(p) for p in init_params(DIMS, 0)]
    m = SplitModel.from_params(DIMS, 2, params)
    s = forward_client(m, np.random.default_rng(0).normal(size=(5, 6)))
    assert s.activations.shape == (5, 10) and not s.activations.any()


def test_identity_client_layer_passes_positive_inputs():
    dims = (3, 3, 2)
    params = [np.eye(3), np.zeros(3), np.ones((3, 2)), np.zeros(2)]
    m = SplitModel.from_params(dims, 1, params)
    X = np.array([[0.5, 1.0, 2.0]])
    np.testing.assert_array_equal(forward_client(m, X).activations, X)


def test_input_width_mismatch_raises():
    with pytest.raises(ValueError):
        forward_client(model(), np.zeros((2, 5)))


def test_server_rejects_bad_shapes_and_labels():
    m = model()
    s = forward_client(m, np.zeros((3, 6)))
    with pytest.raises(ValueError):
        forward_server_and_backward(m, s, np.array([0, 1]))
    with pytest.raises(ValueError):
        forward_server_and_backward(m, s, np.array([0, 1, 4]))
    bad = type(s)(np.zeros((3, 7)))
    with pytest.raises(ValueError):
        forward_server_and_backward(m, bad, np.array([0, 1, 2]))


def test_uniform_logits_loss_is_log_c():
    loss, grad = cross_entropy(np.zeros((4, 7)), np.array([0, 1, 2, 3]))
    assert loss == pytest.approx(np.log(7), abs=1e-15)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-16)


def test_one_layer_server_closed_form_gradient():
    # logits z = a W + b with C = 2; dL/dW = a^T (softmax(z) - onehot)
    dims = (2, 2, 2)
    W1 = np.array([[0.3, -0.2], [0.1, 0.4]])
    b1 = np.array([0.05, -0.1])
    m = SplitModel.from_params(dims, 1, [np.eye(2), np.zeros(2), W1, b1], lr=1.0, momentum=0.0)
    a = np.array([[1.0, 2.0]])
    s = forward_client(m, a)
    z = a @ W1 + b1
    p = np.exp(z) / np.exp(z).sum()
    d = p - np.array([[0.0, 1.0]])
    _, g_client = forward_server_and_backward(m, s, np.array([1]))
    np.testing.assert_allclose(m.server.params[0], W1 - a.T @ d, rtol=0, atol=1e-15)
    np.testing.assert_allclose(m.server.params[1], b1 - d[0], rtol=0, atol=1e-15)
    np.testing.assert_allclose(g_client, d @ W1.T, rtol=0, atol=1e-15)


def test_finite_difference_suite():
    report = check_gradients(trials=20, seed=1)
    assert report.passed, report.summary


def test_finite_difference_helper_on_known_net():
    net = MonolithicNet(DIMS, init_params(DIMS, 3))
    g = np.random.default_rng(0)
    X, y = g.normal(size=(4, 6)), g.integers(0, 4, 4)
    _, analytic = net.gradients(X, y)
    numeric = finite_difference_grads(net, X, y)
    for a, b in zip(analytic, numeric):
        np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-7)


def test_zero_client_grad_leaves_client_unchanged():
    m = model()
    before = [p.copy() for p in m.client_params]
    s = forward_client(m, np.ones((2, 6)))
    backward_client(m, s, np.zeros_like(s.activations))
    for a, b in zip(before, m.client_params):
        np.testing.assert_array_equal(a, b)


def test_stale_cache_rejected():
    m = model()
    s1 = forward_client(m, np.ones((2, 6)))
    s2 = forward_client(m, np.ones((2, 6)))
    _, g = forward_server_and_backward(m, s2, np.array([0, 1]))
    with pytest.raises(RuntimeError):
        backward_client(m, s1, g)
    backward_client(m, s2, g)
    with pytest.raises(RuntimeError):
        backward_client(m, s2, g)


def test_split_training_is_bit_identical_to_monolithic():
    dims = (32, 128, 128, 128, 42)
    params = init_params(dims, 5)
    split = SplitModel.from_params(dims, 2, params)
    mono = MonolithicNet(dims, params)
    g = np.random.default_rng(5)
    for _ in range(4):
        X, y = g.normal(size=(32, 32)), g.integers(0, 42, 32)
        assert split_train_step(split, X, y) == mono.train_step(X, y)
    for a, b in zip(split.all_params(), mono.params):
        np.testing.assert_array_equal(a, b)


def test_split_equivalence_suite():
    report = check_split_equivalence(trials=20, seed=2)
    assert report.passed and report.details["max_drift"] <= 1e-12


def test_two_batches_are_deterministic():
    def run():
        m = model(7)
        g = np.random.default_rng(1)
        for _ in range(2):
            split_train_step(m, g.normal(size=(8, 6)), g.integers(0, 4, 8))
        return m.all_params()
    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)


def test_fedavg_properties():
    g = np.random.default_rng(0)
    a = [g.normal(size=(3, 2)), g.normal(size=2)]
    b = [g.normal(size=(3, 2)), g.normal(size=2)]
    c = [g.normal(size=(3, 2)), g.normal(size=2)]
    assert fedavg({}) is None
    for x, y in zip(fedavg({1: a, 2: a}), a):
        np.testing.assert_array_equal(x, y)
    for x in fedavg({4: a, 9: [-p for p in a]}):
        np.testing.assert_array_equal(x, 0.0)
    for x, p, q, r in zip(fedavg({5: c, 1: a, 3: b}), a, b, c):
        np.testing.assert_array_equal(x, (p + q + r) / 3)
    with pytest.raises(ValueError):
        fedavg({1: a, 2: [np.zeros((2, 2)), np.zeros(2)]})


def test_batches_cover_every_index_once():
    parts = batches(70, 32, np.random.default_rng(0))
    assert [len(p) for p in parts] == [32, 32, 6]
    assert sorted(np.concatenate(parts)) == list(range(70))


def test_untrained_accuracy_near_chance():
    accs = []
    for s in range(20):
        g = np.random.default_rng(s)
        dims = (8, 16, 16, 4)
        X = g.normal(size=(400, 8))
        y = np.repeat(np.arange(4), 100)
        p = init_params(dims, s)
        acc, loss = evaluate(p[:2], p[2:], X, y)
        assert 0.0 <= acc <= 1.0 and loss > 0
        accs.append(acc)
    assert abs(np.mean(accs) - 0.25) < 0.05


def test_blobs_train_to_perfect_accuracy():
    g = np.random.default_rng(0)
    X = np.concatenate([g.normal(-2, 0.3, (50, 4)), g.normal(2, 0.3, (50, 4))])
    y = np.repeat([0, 1], 50)
    dims = (4, 8, 8, 2)
    m = SplitModel.from_params(dims, 1, init_params(dims, 0))
    for _ in range(30):
        for idx in batches(100, 16, g):
            split_train_step(m, X[idx], y[idx])
    assert evaluate(m.client_params, m.server_params, X, y)[0] == 1.0


def test_evaluate_rejects_empty():
    p = init_params(DIMS, 0)
    with pytest.raises(ValueError):
        evaluate(p[:4], p[4:], np.zeros((0, 6)), np.zeros(0, dtype=int))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_checkpoint_roundtrip(tmp_path_factory, seed):
    params = init_params(DIMS, seed)
    path = tmp_path_factory.mktemp("ck") / "w.json"
    save_checkpoint(DIMS, 2, params, path)
    dims, cut, back = load_checkpoint(path)
    assert dims == DIMS and cut == 2 and param_count(back) == param_count(params)
    for a, b in zip(params, back):
        np.testing.assert_array_equal(a, b)
