import numpy as np
import pytest

from anchor_risk.nn import (Mlp, MlpSpec, TrainConfig, TrainingDivergedError, fit_anchored,
                            make_anchored_tuple, train_anchored)


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def numeric_input_grad(model, X, U, h=1e-5):
    g = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        g[idx] = (np.sum(U * model.forward(Xp)) - np.sum(U * model.forward(Xm))) / (2 * h)
    return g


def numeric_param_grad(model, X, U, arr, h=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(*arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        fp = np.sum(U * model.forward(X))
        arr[idx] = old - h
        fm = np.sum(U * model.forward(X))
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def test_anchored_tuple_examples():
    np.testing.assert_array_equal(make_anchored_tuple([3.0], [1.0]), [1.0, 2.0])
    np.testing.assert_array_equal(make_anchored_tuple([1.0, 2.0], [1.0, 2.0]), [1.0, 2.0, 0.0, 0.0])
    batch = make_anchored_tuple(np.array([[0.5, -1.0], [2.0, 2.0]]), np.array([[1.0, 1.0], [0.0, 3.0]]))
    np.testing.assert_array_equal(batch, [[1.0, 1.0, -0.5, -2.0], [0.0, 3.0, 2.0, -1.0]])


def test_anchored_tuple_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        make_anchored_tuple(np.zeros(2), np.zeros(3))


def test_forward_hand_computed():
    spec = MlpSpec(2, (2,), 1)
    m = Mlp(spec, [np.array([[1.0, -1.0], [2.0, 1.0]]), np.array([[1.0], [3.0]])],
            [np.array([0.0, 0.5]), np.array([-1.0])])
    # z1 = [1 + 2, -1 + 1 + 0.5] = [3, 0.5]; out = 3 + 1.5 - 1
    np.testing.assert_allclose(m.forward([[1.0, 1.0]]), [[3.5]])
    # second hidden unit inactive: z1 = [-1 + 0, 1 + 0 + 0.5]
    np.testing.assert_allclose(m.forward([[-1.0, 0.0]]), [[3 * 1.5 - 1.0]])


def test_init_is_seeded_and_bounded():
    spec = MlpSpec(4, (16, 8), 1, seed=7)
    a, b = Mlp.init(spec), Mlp.init(spec)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
        assert np.all(np.abs(wa) <= np.sqrt(6.0 / wa.shape[0]))
    assert all(np.all(bias == 0) for bias in a.biases)
    c = Mlp.init(MlpSpec(4, (16, 8), 1, seed=8))
    assert not np.array_equal(a.weights[0], c.weights[0])


@pytest.mark.parametrize("hidden", [(5,), (6, 4), (4, 5, 3), (3, 4, 4, 3)])
def test_gradients_match_finite_differences(hidden, rng):
    spec = MlpSpec(4, hidden, 2, seed=int(rng.integers(1000)))
    m = Mlp.init(spec)
    m.biases = [rng.normal(size=b.shape) * 0.1 for b in m.biases]
    X = rng.normal(size=(3, 4))
    U = rng.normal(size=(3, 2))
    gx, gw, gb = m.backward(X, U)
    assert rel_err(gx, numeric_input_grad(m, X, U)) < 1e-4
    for i in range(m.n_layers):
        assert rel_err(gw[i], numeric_param_grad(m, X, U, m.weights[i])) < 1e-4
        assert rel_err(gb[i], numeric_param_grad(m, X, U, m.biases[i])) < 1e-4
    np.testing.assert_array_equal(m.grad_input(X, U), gx)


def test_input_validation():
    m = Mlp.init(MlpSpec(2, (3,), 1))
    with pytest.raises(ValueError, match="columns"):
        m.forward(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="NaN"):
        m.forward([[np.nan, 0.0]])


def test_spec_and_config_validation():
    with pytest.raises(ValueError):
        MlpSpec(0)
    with pytest.raises(ValueError):
        MlpSpec(2, (0,))
    with pytest.raises(ValueError):
        TrainConfig(loss="huber")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)


def test_training_is_deterministic(rng):
    X = rng.uniform(-1, 1, size=(40, 1))
    y = np.sin(3 * X[:, 0])
    spec = MlpSpec(2, (16, 16), 1, seed=3)
    cfg = TrainConfig(epochs=30, batch_size=8, learning_rate=3e-3, seed=5)
    a, b = train_anchored(X, y, spec, cfg), train_anchored(X, y, spec, cfg)
    assert a.loss_history == b.loss_history
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


def test_constant_target_is_learned(rng):
    X = rng.uniform(-1, 1, size=(64, 2))
    y = np.full(64, 2.5)
    m = train_anchored(X, y, MlpSpec(4, (16, 16), 1, seed=0),
                       TrainConfig(epochs=800, batch_size=16, learning_rate=3e-3, loss="mse"))
    assert m.loss_history[-1] < 1e-2
    assert m.loss_history[-1] < m.loss_history[0]
    probe = make_anchored_tuple(X[:5], X[5:10])
    np.testing.assert_allclose(m.forward(probe)[:, 0], 2.5, atol=0.1)


def test_divergence_reports_location():
    X = np.array([[0.0], [1.0]])
    m = Mlp.init(MlpSpec(2, (4,), 1))
    with pytest.raises(TrainingDivergedError) as err:
        fit_anchored(m, X, np.array([1e308, -1e308]),
                     TrainConfig(epochs=3, batch_size=2, loss="mse"))
    assert err.value.epoch == 0 and err.value.batch == 0


def test_fit_shape_checks():
    m = Mlp.init(MlpSpec(4, (4,), 1))
    with pytest.raises(ValueError, match="2\\*d"):
        fit_anchored(m, np.zeros((5, 1)), np.zeros(5), TrainConfig(epochs=1))
    with pytest.raises(ValueError, match="targets"):
        fit_anchored(m, np.zeros((5, 2)), np.zeros(4), TrainConfig(epochs=1))
