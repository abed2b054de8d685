import math

import numpy as np
import pytest

from ricmatch.netcost import ComputeModel
from ricmatch.nn import (ENC_DEC_SPEC, FF_SPEC, Activation, AdamState, Dataset, Gradients, Network, NetworkSpec,
                         NonFiniteLossError, TrainConfig, adam_step, backward, evaluate_mape, forward, grad_check,
                         init_network, load_checkpoint, loss_and_grad, mape, save_checkpoint, train)
from ricmatch.preprocess import FeatureMatrix, NormMode, TargetVector, fit_normalizer


def test_spec_validation():
    assert FF_SPEC.n_params == 6 * 30 + 30 + 30 * 30 + 30 + 30 + 1
    for widths in [(3,), (3, 0, 1), (3, 2)]:
        with pytest.raises(ValueError):
            NetworkSpec(widths)


def test_init_shapes_and_zero_biases():
    net = init_network(FF_SPEC, 5)
    assert [w.shape for w in net.weights] == [(30, 6), (30, 30), (1, 30)]
    assert all(np.all(b == 0) for b in net.biases)
    assert np.array_equal(net.flat, init_network(FF_SPEC, 5).flat)
    assert not np.array_equal(net.flat, init_network(FF_SPEC, 6).flat)


def test_init_glorot_bound():
    bound = math.sqrt(6 / 60)
    for seed in range(100):
        assert np.abs(init_network(FF_SPEC, seed).weights[1]).max() < bound


def test_forward_closed_forms():
    net = Network(NetworkSpec((2, 1, 1), Activation.SIGMOID))
    assert forward(net, np.array([[1.0, -2.0]])).tolist() == [0.0]
    net.weights[1][...] = 1.0
    assert forward(net, np.array([[1.0, -2.0]])).tolist() == [0.5]
    lin = Network(NetworkSpec((1, 1)))
    lin.weights[0][...] = 2.0
    lin.biases[0][...] = 1.0
    assert forward(lin, np.array([[3.0]])).tolist() == [7.0]


def test_forward_tanh_antisymmetry():
    from ricmatch.nn import _activations
    net = init_network(NetworkSpec((3, 4, 1), Activation.TANH), 1)
    x = np.array([[0.3, -1.2, 0.7]])
    h_pos = _activations(net, x)[1]
    h_neg = _activations(net, -x)[1]
    assert np.allclose(h_pos, -h_neg, rtol=0, atol=1e-15)


def test_forward_width_mismatch():
    with pytest.raises(ValueError):
        forward(init_network(FF_SPEC, 0), np.zeros((2, 3)))


def test_backward_zero_residual():
    net = init_network(FF_SPEC, 2)
    x = np.random.default_rng(0).random((5, 6))
    grads = backward(net, x, forward(net, x))
    assert np.all(grads.flat == 0)


def test_backward_single_linear_neuron():
    net = Network(NetworkSpec((1, 1)))
    net.weights[0][...] = 1.0
    loss, grads = loss_and_grad(net, np.array([[1.0]]), np.array([0.0]))
    assert loss == 1.0
    assert grads.weights[0][0, 0] == 2.0 and grads.biases[0][0] == 2.0


@pytest.mark.parametrize("spec", [FF_SPEC, ENC_DEC_SPEC])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_check(spec, seed):
    g = np.random.default_rng(seed)
    net = init_network(spec, seed)
    x = g.random((8, spec.layer_widths[0]))
    assert grad_check(net, (x, g.random(8)), 1e-5) <= 1e-4


def test_grad_check_rejects_bad_h():
    with pytest.raises(ValueError):
        grad_check(init_network(FF_SPEC, 0), (np.zeros((1, 6)), np.zeros(1)), 0.0)


def test_adam_zero_gradient_keeps_params():
    net = init_network(FF_SPEC, 0)
    before = net.flat.copy()
    state = AdamState.fresh(net)
    adam_step(net, Gradients(FF_SPEC), state, 0.1)
    assert np.array_equal(net.flat, before) and state.t == 1


def test_adam_first_step_hand_value():
    net = Network(NetworkSpec((1, 1)))
    grads = Gradients(net.spec, np.array([1.0, 1.0]))
    state = AdamState.fresh(net)
    adam_step(net, grads, state, 0.1)
    assert net.flat[0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)


def test_adam_first_step_is_signed_lr():
    g = np.random.default_rng(3)
    net = init_network(FF_SPEC, 0)
    before = net.flat.copy()
    grads = Gradients(FF_SPEC, g.standard_normal(FF_SPEC.n_params))
    adam_step(net, grads, AdamState.fresh(net), 1e-3)
    step = net.flat - before
    assert np.all(np.sign(step) == -np.sign(grads.flat))
    # at t=1, m_hat / sqrt(v_hat) = g / |g|, so the step is lr * |g| / (|g| + eps)
    mag = np.abs(grads.flat)
    assert np.allclose(np.abs(step), 1e-3 * mag / (mag + 1e-8), rtol=1e-12, atol=0)
    assert np.max(np.abs(np.abs(step) - 1e-3)) <= 1e-6


def _reference_adam(theta, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    # plain-Python transcription of the update equations, one coordinate at a time
    theta = [float(t) for t in theta]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        for i in range(len(theta)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            theta[i] = theta[i] - lr * mh / (math.sqrt(vh) + eps)
    return theta


@pytest.mark.parametrize("n", [1, 10])
def test_adam_matches_reference_on_quadratic(n):
    g = np.random.default_rng(n)
    centre = g.standard_normal(n)
    curv = g.uniform(0.5, 3.0, n)

    def grad(theta):
        return [2 * curv[i] * (theta[i] - centre[i]) for i in range(n)]

    spec = NetworkSpec((n, 1))  # n weights + 1 bias; the bias gets zero gradient
    net = Network(spec)
    start = g.standard_normal(n)
    net.flat[:n] = start
    state = AdamState.fresh(net)
    for _ in range(100):
        gr = Gradients(spec)
        gr.flat[:n] = grad(net.flat[:n].tolist())
        adam_step(net, gr, state, 0.05)
    ref = _reference_adam(start, grad, 0.05, 100)
    assert np.max(np.abs(net.flat[:n] - ref)) <= 1e-12


def test_adam_shape_mismatch():
    net = init_network(FF_SPEC, 0)
    with pytest.raises(ValueError):
        adam_step(net, Gradients(ENC_DEC_SPEC), AdamState.fresh(net), 1e-3)


def test_mape_examples():
    assert mape([100], [90]).value == pytest.approx(10.0)
    assert mape([5, 7], [5, 7]).value == 0.0
    assert mape([0, 200, 100], [5, 100, 150]).value == 50.0
    r = mape([0, 0], [1, 2])
    assert r.value == 0.0 and r.degenerate
    with pytest.raises(ValueError):
        mape([0, 1], [0, 1], nonzero_only=False)


def _toy(n=200, seed=0, cols=3):
    g = np.random.default_rng(seed)
    x = g.uniform(0, 1, (n, cols))
    y = 1.0 + x @ np.arange(1, cols + 1)
    return x, y


def test_evaluate_mape_scale_free():
    x, y = _toy()
    net = init_network(NetworkSpec((3, 4, 1), Activation.TANH), 0)
    norm = fit_normalizer(NormMode.MINMAX, FeatureMatrix(x, ("a", "b", "c")))
    base = evaluate_mape(net, FeatureMatrix(x, ("a", "b", "c")), TargetVector(y, 2.0), norm)
    scaled = evaluate_mape(net, FeatureMatrix(x, ("a", "b", "c")), TargetVector(y * 1024, 2.0 * 1024), norm)
    assert scaled.value == base.value


def _datasets(n=200, seed=0):
    x, y = _toy(n, seed)
    scale = y.max()
    names = ("a", "b", "c")
    k = n // 5
    return (Dataset(FeatureMatrix(x[k:], names), TargetVector(y[k:], scale)),
            Dataset(FeatureMatrix(x[:k], names), TargetVector(y[:k], scale)))


def test_train_zero_epochs_returns_initial():
    tr, va = _datasets()
    net = init_network(ENC_DEC_SPEC, 0)
    out, rep = train(net, tr, va, TrainConfig(max_epochs=0))
    assert np.array_equal(out.flat, net.flat)
    assert rep.train_mse == [] and rep.val_mape == [] and rep.epochs_completed == 0


def test_train_budget_below_one_epoch():
    tr, va = _datasets()
    cfg = TrainConfig(max_epochs=10, time_budget=1e-9, compute=ComputeModel(1e-6, 0.0))
    assert train(init_network(ENC_DEC_SPEC, 0), tr, va, cfg)[1].epochs_completed == 0


def test_train_learning_progress_and_best_snapshot():
    tr, va = _datasets()
    net, rep = train(init_network(ENC_DEC_SPEC, 1), tr, va, TrainConfig(learning_rate=1e-3, max_epochs=500, seed=3))
    assert rep.val_mape[-1] < rep.initial_val_mape
    assert rep.best_val_mape == min(rep.val_mape)
    assert rep.val_mape[rep.best_epoch - 1] == rep.best_val_mape
    again = evaluate_mape(net, va.features, va.targets, None)
    assert again.value == pytest.approx(rep.best_val_mape, rel=1e-12)


def test_train_deterministic():
    tr, va = _datasets()
    cfg = TrainConfig(max_epochs=20, seed=9, batch_size=32)
    a = train(init_network(ENC_DEC_SPEC, 2), tr, va, cfg)
    b = train(init_network(ENC_DEC_SPEC, 2), tr, va, cfg)
    assert np.array_equal(a[0].flat, b[0].flat)
    assert a[1].to_dict() == b[1].to_dict()


def test_train_does_not_mutate_input():
    tr, va = _datasets()
    net = init_network(ENC_DEC_SPEC, 0)
    before = net.flat.copy()
    train(net, tr, va, TrainConfig(max_epochs=3))
    assert np.array_equal(net.flat, before)


def test_modeled_epoch_time_regression_recovers_cost():
    c = ComputeModel(3e-6, 2e-3)
    sizes, times = [], []
    for n in (50, 100, 200, 400):
        tr, va = _datasets(n + n // 4)
        _, rep = train(init_network(ENC_DEC_SPEC, 0), tr, va, TrainConfig(max_epochs=2, compute=c))
        sizes.append(len(tr))
        times.append(rep.epoch_time_s[0])
    slope, intercept = np.polyfit(sizes, times, 1)
    assert abs(slope - 3e-6) < 1e-9 and abs(intercept - 2e-3) < 1e-9


def test_train_nonfinite_loss_names_epoch():
    names = ("a", "b", "c")
    x = np.ones((10, 3))
    tr = Dataset(FeatureMatrix(x, names), TargetVector(np.full(10, 1e200)))
    with pytest.raises(NonFiniteLossError, match="epoch 1"):
        train(init_network(ENC_DEC_SPEC, 0), tr, tr, TrainConfig(max_epochs=2))


def test_train_rejects_empty():
    tr, va = _datasets()
    empty = Dataset(FeatureMatrix(np.zeros((0, 3)), ("a", "b", "c")), TargetVector([]))
    with pytest.raises(ValueError):
        train(init_network(ENC_DEC_SPEC, 0), empty, va, TrainConfig())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_checkpoint_round_trip(tmp_path):
    net = init_network(FF_SPEC, 4)
    norm = fit_normalizer(NormMode.MINMAX, FeatureMatrix(np.arange(12.0).reshape(2, 6), tuple("abcdef")))
    path = tmp_path / "m.json"
    save_checkpoint(path, net, norm, 5e6)
    net2, norm2, scale = load_checkpoint(path)
    assert np.array_equal(net2.flat, net.flat) and norm2 == norm and scale == 5e6
    assert net2.spec == FF_SPEC
