import numpy as np
import pytest

from taskal.errors import FormatError, TrainingError
from taskal.learner import (PARAM_NAMES, TrainConfig, encode, full_loss, head, init_model,
                            load_model, loss_and_grad, predict, save_model, train)
from taskal.metrics import accuracy, rmse
from taskal.pool import EmbeddingMatrix

from oracles import finite_difference


def flat_grad(grad):
    return np.concatenate([grad[k].ravel() for k in PARAM_NAMES])


def random_case(seed, task):
    rng = np.random.default_rng(seed)
    d, h, out, n = (int(v) for v in rng.integers(1, 6, size=4))
    if task == "classifier":
        out = max(out, 2)
    model = init_model(task, d, h, out, seed=seed)
    # perturb biases away from zero so their gradients are exercised
    model = model.with_flat(model.flat() + rng.normal(0, 0.3, size=model.flat().size))
    X = rng.standard_normal((n, d))
    y = rng.integers(0, out, size=n) if task == "classifier" else rng.standard_normal((n, out))
    return model, X, y


@pytest.mark.parametrize("task", ["classifier", "dense_regressor"])
@pytest.mark.parametrize("seed", range(12))
def test_gradient_matches_finite_differences(task, seed):
    model, X, y = random_case(seed, task)
    _, grad = loss_and_grad(model, X, y)
    numeric = finite_difference(lambda v: full_loss(model.with_flat(v), X, y), model.flat())
    rel = np.abs(flat_grad(grad) - numeric) / np.maximum(1.0, np.abs(numeric))
    assert rel.max() <= 1e-4


def test_zero_output_zero_target():
    model = init_model("dense_regressor", 3, 4, 2, seed=0)
    p = dict(model.params)
    p["W2"] = np.zeros_like(p["W2"])
    model = type(model)(model.task, p)
    loss, grad = loss_and_grad(model, np.ones((5, 3)), np.zeros((5, 2)))
    assert loss == 0.0
    assert not grad["W2"].any() and not grad["b2"].any()


def test_duplicated_batch_unchanged():
    model, X, y = random_case(3, "classifier")
    l1, g1 = loss_and_grad(model, X, y)
    l2, g2 = loss_and_grad(model, np.vstack([X, X]), np.concatenate([y, y]))
    assert l2 == pytest.approx(l1, rel=1e-12)
    np.testing.assert_allclose(flat_grad(g2), flat_grad(g1), rtol=1e-10, atol=1e-14)


def test_init_determinism_and_shapes():
    a = init_model("classifier", 4, 3, 2, seed=7)
    b = init_model("classifier", 4, 3, 2, seed=7)
    assert a.flat().tobytes() == b.flat().tobytes()
    assert np.abs(a.params["W1"]).max() <= 0.5
    m = init_model("dense_regressor", 4, 1, 2, seed=0)
    assert encode(m, np.ones((3, 4))).shape == (3, 1)
    with pytest.raises(TrainingError):
        init_model("classifier", 0, 3, 2)


def test_encode_properties():
    m = init_model("classifier", 3, 5, 2, seed=1)
    assert not encode(m, np.zeros((1, 3))).any()
    X = np.random.default_rng(0).normal(0, 20, size=(50, 3))
    X[1] = X[0]
    Z = encode(m, X)
    assert Z.shape == (50, 5)
    assert np.array_equal(Z[0], Z[1])
    assert np.all(np.abs(Z) <= 1.0)
    E = encode(m, EmbeddingMatrix(X, np.arange(50) + 100))
    assert E.ids.tolist() == list(range(100, 150))
    with pytest.raises(TrainingError):
        encode(m, np.zeros((2, 4)))


def test_predict_properties():
    m = init_model("classifier", 3, 4, 5, seed=2)
    X = np.random.default_rng(1).standard_normal((20, 3))
    P = predict(m, X)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-6)
    assert predict(m, np.zeros((0, 3))).shape == (0, 5)
    np.testing.assert_allclose(P, head(m, encode(m, X)), atol=1e-6)


def test_one_step_reduces_single_example_loss():
    model, X, y = random_case(4, "dense_regressor")
    before = full_loss(model, X[:1], y[:1])
    after = full_loss(train(model, X[:1], y[:1], TrainConfig(epochs=1, learning_rate=1e-3)),
                      X[:1], y[:1])
    assert after < before


def test_train_config_validation():
    with pytest.raises(TrainingError):
        TrainConfig(epochs=0)
    with pytest.raises(TrainingError):
        TrainConfig(learning_rate=0.0)


def test_two_blobs_are_learned():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 100)
    centres = np.array([[-3.0, 0.0], [3.0, 0.0]])  # separation 6 sigma
    X = centres[y] + rng.standard_normal((200, 2))
    model = init_model("classifier", 2, 16, 2, seed=0)
    trained = train(model, X, y, TrainConfig(seed=0))
    assert full_loss(trained, X, y) < full_loss(model, X, y)
    assert accuracy(predict(trained, X).argmax(axis=1), y) >= 0.99


def test_linear_teacher_is_learned():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((400, 4))
    A = rng.normal(0, 0.5, size=(4, 3))
    Y = X @ A
    model = init_model("dense_regressor", 4, 16, 3, seed=1)
    trained = train(model, X, Y, TrainConfig(epochs=400, seed=1))
    assert rmse(predict(trained, X), Y) < 0.05


def test_training_is_deterministic():
    rng = np.random.default_rng(5)
    X, y = rng.standard_normal((64, 3)), rng.integers(0, 3, size=64)
    m = init_model("classifier", 3, 8, 3, seed=5)
    cfg = TrainConfig(epochs=20, seed=9)
    assert train(m, X, y, cfg).flat().tobytes() == train(m, X, y, cfg).flat().tobytes()


def test_divergence_is_reported():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(0, 100, size=(10, 2)), np.full((10, 1), 1e200)
    m = init_model("dense_regressor", 2, 4, 1)
    with pytest.raises(TrainingError, match="epoch"):
        train(m, X, Y, TrainConfig(epochs=50, learning_rate=10.0))


def test_shape_errors():
    m = init_model("classifier", 3, 4, 2)
    with pytest.raises(TrainingError):
        loss_and_grad(m, np.zeros((2, 3)), [0, 1, 1])
    with pytest.raises(TrainingError):
        loss_and_grad(m, np.zeros((2, 3)), [0, 2])


def test_snapshot_round_trip(tmp_path):
    m = init_model("dense_regressor", 3, 5, 2, seed=3)
    save_model(m, tmp_path / "m.almd")
    back = load_model(tmp_path / "m.almd")
    assert back.task == m.task and back.flat().tobytes() == m.flat().tobytes()
    raw = (tmp_path / "m.almd").read_bytes()
    assert raw[:4] == b"ALMD"
    (tmp_path / "bad.almd").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_model(tmp_path / "bad.almd")
