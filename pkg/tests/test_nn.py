import numpy as np
import pytest

from rotodrop.data import make_synthetic
from rotodrop.generators import GeneratorConfig, GeneratorKind, make_generator
from rotodrop.nn import (DenseLayer, EpochMetrics, Mlp, TrainConfig,
                         TrainingDiverged, backward, cross_entropy,
                         evaluate, forward_train, load_model, save_model,
                         softmax, train, train_step)


def toy_net():
    """2-2-2 net with hand-set weights used for the worked example."""
    return Mlp([
        DenseLayer([[0.5, -0.25], [1.0, 0.75]], [0.1, -0.2], "relu"),
        DenseLayer([[1.0, -1.0], [0.5, 0.25]], [0.0, 0.5], "identity"),
    ])


class TestForward:
    def test_hand_computed_masked_forward(self):
        # x=[1,2]: z1=[0.1,2.3], relu keeps both; mask [1,0] at p=0.5
        # doubles the kept unit: [0.2, 0]; then z2=[0.2, 0.6]
        mlp = toy_net()
        scores, _ = forward_train(mlp, [[1.0, 2.0]], [np.array([[1, 0]])], 0.5)
        assert np.allclose(scores, [[0.2, 0.6]], atol=1e-12)

    def test_all_ones_mask_p1_equals_inference(self):
        mlp = toy_net()
        x = np.array([[0.3, -0.7], [1.0, 2.0]])
        scores, _ = forward_train(mlp, x, [np.ones((2, 2))], 1.0)
        assert np.array_equal(scores, mlp.forward_infer(x))

    def test_all_zeros_mask_kills_layer(self):
        # site output zeroed -> next layer sees only its bias
        mlp = toy_net()
        scores, _ = forward_train(mlp, [[1.0, 2.0]], [np.zeros((1, 2))], 0.5)
        assert np.array_equal(scores, [[0.0, 0.5]])

    def test_softmax_normalized(self):
        mlp = Mlp.create((4, 6, 3), seed=1)
        scores = mlp.forward_infer(np.random.default_rng(0).random((5, 4)))
        assert np.all(np.abs(softmax(scores).sum(axis=1) - 1.0) < 1e-9)

    def test_inference_deterministic(self):
        mlp = Mlp.create((4, 6, 3), seed=1)
        x = np.random.default_rng(2).random((3, 4))
        assert np.array_equal(mlp.forward_infer(x), mlp.forward_infer(x))

    def test_dimension_mismatch(self):
        mlp = toy_net()
        with pytest.raises(ValueError):
            forward_train(mlp, [[1.0, 2.0]], [np.ones((1, 3))], 0.5)
        with pytest.raises(ValueError):
            Mlp([DenseLayer(np.zeros((2, 2)), np.zeros(2)),
                 DenseLayer(np.zeros((2, 3)), np.zeros(2))])


def numeric_gradients(mlp, x, labels, masks, keep_p, eps=1e-4):
    """Central finite differences of the batch loss, the independent oracle."""
    grads = []
    for layer in mlp.layers:
        dw = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            orig = layer.weights[idx]
            layer.weights[idx] = orig + eps
            up, _ = forward_train(mlp, x, masks, keep_p)
            layer.weights[idx] = orig - eps
            down, _ = forward_train(mlp, x, masks, keep_p)
            layer.weights[idx] = orig
            dw[idx] = (cross_entropy(up, labels) - cross_entropy(down, labels)) / (2 * eps)
        db = np.zeros_like(layer.bias)
        for i in range(layer.bias.size):
            orig = layer.bias[i]
            layer.bias[i] = orig + eps
            up, _ = forward_train(mlp, x, masks, keep_p)
            layer.bias[i] = orig - eps
            down, _ = forward_train(mlp, x, masks, keep_p)
            layer.bias[i] = orig
            db[i] = (cross_entropy(up, labels) - cross_entropy(down, labels)) / (2 * eps)
        grads.append((dw, db))
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-2)
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def random_case(seed, dims, activation):
    rng = np.random.default_rng(seed)
    mlp = Mlp.create(dims, seed=seed, hidden_activation=activation)
    x = rng.standard_normal((3, dims[0]))
    labels = rng.integers(0, dims[-1], size=3)
    masks = [(rng.random((3, w)) < 0.5).astype(float) for w in dims[1:-1]]
    return mlp, x, labels, masks


def relu_kink_free(mlp, x, masks, keep_p, margin=1e-3):
    """Reject cases where finite differences would straddle a relu kink."""
    _, cache = forward_train(mlp, x, masks, keep_p)
    return all(np.abs(z).min() > margin for z, layer in
               zip(cache["z"], mlp.layers) if layer.activation == "relu")


class TestGradients:
    def test_toy_net_matches_finite_differences(self):
        mlp, x, labels = toy_net(), np.array([[1.0, 2.0], [-0.4, 0.9]]), np.array([0, 1])
        masks = [np.array([[1, 0], [1, 1]], dtype=float)]
        _, cache = forward_train(mlp, x, masks, 0.5)
        analytic = backward(mlp, cache, labels)
        numeric = numeric_gradients(mlp, x, labels, masks, 0.5)
        assert max_relative_error(analytic, numeric) < 1e-5

    @pytest.mark.parametrize("activation", ["relu", "sigmoid"])
    @pytest.mark.parametrize("masked", [True, False])
    def test_random_small_nets(self, activation, masked):
        checked = 0
        seed = 0
        while checked < 30:
            seed += 1
            mlp, x, labels, masks = random_case(seed, (5, 8, 8, 4), activation)
            if not masked:
                masks = [None] * 2
            if activation == "relu" and not relu_kink_free(mlp, x, masks, 0.5):
                continue
            _, cache = forward_train(mlp, x, masks, 0.5)
            analytic = backward(mlp, cache, labels)
            numeric = numeric_gradients(mlp, x, labels, masks, 0.5)
            assert max_relative_error(analytic, numeric) < 1e-5
            checked += 1

    def test_zero_mask_zeroes_upstream_gradients(self):
        mlp = Mlp.create((4, 5, 3), seed=2)
        x = np.random.default_rng(1).random((2, 4))
        masks = [np.zeros((2, 5))]
        _, cache = forward_train(mlp, x, masks, 0.5)
        grads = backward(mlp, cache, np.array([0, 2]))
        assert np.all(grads[0][0] == 0.0)  # weights feeding the dead site
        assert np.all(grads[0][1] == 0.0)
        assert np.all(grads[1][0] == 0.0)  # weights reading the zeroed site
        assert np.any(grads[1][1] != 0.0)  # output bias still learns


class TestTrainStep:
    def test_lr_zero_leaves_parameters(self):
        mlp = Mlp.create((3, 4, 2), seed=0)
        before = [(l.weights.copy(), l.bias.copy()) for l in mlp.layers]
        x = np.random.default_rng(0).random((4, 3))
        train_step(mlp, x, np.array([0, 1, 0, 1]), [None], 1.0, lr=0.0)
        for layer, (w, b) in zip(mlp.layers, before):
            assert np.array_equal(layer.weights, w)
            assert np.array_equal(layer.bias, b)

    def test_loss_decreases_on_first_step(self):
        ds = make_synthetic("blobs", 40, seed=3, dim=6, classes=3, noise=0.2)
        mlp = Mlp.create((6, 8, 3), seed=1)
        before = train_step(mlp, ds.images, ds.labels, [None], 1.0, lr=0.05)
        after = cross_entropy(mlp.forward_infer(ds.images), ds.labels)
        assert after < before

    def test_divergence_raises(self):
        mlp = Mlp.create((3, 4, 2), seed=0)
        mlp.layers[0].weights[0, 0] = np.inf
        with np.errstate(invalid="ignore"):
            with pytest.raises(TrainingDiverged):
                train_step(mlp, np.ones((2, 3)), np.array([0, 1]), [None], 1.0, lr=0.1)


class TestTrain:
    def test_smoke_one_epoch(self):
        ds = make_synthetic("blobs", 10, seed=0, dim=4, classes=2)
        mlp = Mlp.create((4, 6, 2), seed=0)
        history = train(mlp, ds, ds, TrainConfig(batch_size=5, epochs=1, seed=0))
        assert len(history) == 1
        assert isinstance(history[0], EpochMetrics)
        assert 0.0 <= history[0].train_accuracy <= 1.0

    def test_xor_learnable(self):
        ds = make_synthetic("xor", 4)
        mlp = Mlp.create((2, 8, 2), seed=1)
        config = TrainConfig(batch_size=4, learning_rate=0.5, epochs=2000, seed=0)
        history = train(mlp, ds, ds, config)
        assert history[-1].train_accuracy == 1.0

    def test_identical_seeds_identical_trajectories(self):
        ds = make_synthetic("blobs", 60, seed=5, dim=8, classes=3, noise=0.4)

        def run():
            mlp = Mlp.create((8, 10, 3), seed=7)
            sources = [make_generator(GeneratorConfig(
                kind=GeneratorKind.GENERAL_SERIAL, n=10, p=0.5, seed=13))]
            config = TrainConfig(batch_size=20, learning_rate=0.1, epochs=5,
                                 seed=21, keep_p=0.5)
            return train(mlp, ds, ds, config, sources), mlp

        history_a, mlp_a = run()
        history_b, mlp_b = run()
        assert history_a == history_b
        for la, lb in zip(mlp_a.layers, mlp_b.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_mask_source_equivalence(self):
        # two sources that emit the same mask sequence produce bitwise
        # identical training runs: the harness is strategy-agnostic
        ds = make_synthetic("blobs", 40, seed=2, dim=6, classes=2, noise=0.4)
        recorded = make_generator(GeneratorConfig(
            kind=GeneratorKind.PROPOSED, n=9, p=0.5, seed=3)).next_masks(80)

        class Replay:
            def __init__(self, rows):
                self._rows = list(rows)

            def next_masks(self, count):
                out = [self._rows.pop(0) for _ in range(count)]
                return np.array(out, dtype=np.uint8)

        def run(source):
            mlp = Mlp.create((6, 9, 2), seed=4)
            config = TrainConfig(batch_size=10, learning_rate=0.1, epochs=2,
                                 seed=6, keep_p=0.5)
            return train(mlp, ds, ds, config, [source]), mlp

        history_a, mlp_a = run(Replay(recorded))
        history_b, mlp_b = run(Replay(recorded))
        assert history_a == history_b
        for la, lb in zip(mlp_a.layers, mlp_b.layers):
            assert np.array_equal(la.weights, lb.weights)

    def test_inverted_dropout_preserves_expectation(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(16) + 2.0
        p, trials = 0.5, 4000
        masks = (rng.random((trials, 16)) < p).astype(float)
        mean = (masks * x / p).mean(axis=0)
        sigma = np.abs(x) * np.sqrt((1 - p) / (p * trials))
        assert np.all(np.abs(mean - x) <= 3 * sigma)

    def test_wrong_source_count(self):
        ds = make_synthetic("blobs", 10, seed=0, dim=4, classes=2)
        mlp = Mlp.create((4, 6, 2), seed=0)
        with pytest.raises(ValueError):
            train(mlp, ds, ds, TrainConfig(epochs=1), [None, None])


class TestInputDropout:
    def test_off_by_default_matches_inference(self):
        mlp = toy_net()
        x = np.array([[1.0, 2.0]])
        scores, _ = forward_train(mlp, x, [np.ones((1, 2))], 1.0)
        assert np.array_equal(scores, mlp.forward_infer(x))

    def test_input_mask_scales_input(self):
        # masking the second input at p=0.5 doubles the first one
        mlp = toy_net()
        scores, _ = forward_train(mlp, [[1.0, 2.0]], [np.ones((1, 2))], 1.0,
                                  input_mask=np.array([[1, 0]]), input_p=0.5)
        doubled, _ = forward_train(mlp, [[2.0, 0.0]], [np.ones((1, 2))], 1.0)
        assert np.allclose(scores, doubled)

    def test_gradients_with_input_mask(self):
        rng = np.random.default_rng(3)
        mlp = Mlp.create((5, 6, 3), seed=3, hidden_activation="sigmoid")
        x = rng.standard_normal((2, 5))
        labels = np.array([0, 2])
        imask = (rng.random((2, 5)) < 0.5).astype(float)
        _, cache = forward_train(mlp, x, [None], 1.0, input_mask=imask, input_p=0.5)
        analytic = backward(mlp, cache, labels)
        eps = 1e-4
        for layer, (aw, _) in zip(mlp.layers, analytic):
            idx = (0, 0)
            orig = layer.weights[idx]
            layer.weights[idx] = orig + eps
            up, _ = forward_train(mlp, x, [None], 1.0, input_mask=imask, input_p=0.5)
            layer.weights[idx] = orig - eps
            down, _ = forward_train(mlp, x, [None], 1.0, input_mask=imask, input_p=0.5)
            layer.weights[idx] = orig
            numeric = (cross_entropy(up, labels) - cross_entropy(down, labels)) / (2 * eps)
            assert abs(aw[idx] - numeric) < 1e-7 * max(1.0, abs(numeric))

    def test_train_with_input_source(self):
        from rotodrop.data import make_synthetic
        ds = make_synthetic("blobs", 30, seed=1, dim=6, classes=2)
        mlp = Mlp.create((6, 8, 2), seed=0)
        source = make_generator(GeneratorConfig(
            kind=GeneratorKind.GENERAL_SERIAL, n=6, p=0.5, seed=2))
        history = train(mlp, ds, ds, TrainConfig(batch_size=10, epochs=2, seed=0),
                        input_source=source)
        assert len(history) == 2

    def test_shape_mismatch(self):
        mlp = toy_net()
        with pytest.raises(ValueError):
            forward_train(mlp, [[1.0, 2.0]], [None], 1.0,
                          input_mask=np.ones((1, 3)), input_p=0.5)


def test_history_to_csv_schema():
    from rotodrop.nn import history_to_csv
    history = [EpochMetrics(0, 0.5, 0.4, 1.2, 1.3)]
    text = history_to_csv(history, trial=2)
    lines = text.strip().split("\n")
    assert lines[0] == "trial,epoch,split,accuracy,loss"
    assert lines[1] == "2,0,train,0.5,1.2"
    assert lines[2] == "2,0,test,0.4,1.3"


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        mlp = Mlp.create((5, 7, 3), seed=11, hidden_activation="sigmoid")
        path = tmp_path / "model.bin"
        save_model(mlp, path)
        back = load_model(path)
        assert back.dims == mlp.dims
        for la, lb in zip(mlp.layers, back.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)
            assert la.activation == lb.activation
        x = np.random.default_rng(0).random((2, 5))
        assert np.array_equal(mlp.forward_infer(x), back.forward_infer(x))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTRD" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_model(path)


def test_evaluate_bounds():
    ds = make_synthetic("blobs", 30, seed=1, dim=4, classes=3)
    acc, loss = evaluate(Mlp.create((4, 5, 3), seed=0), ds)
    assert 0.0 <= acc <= 1.0
    assert np.isfinite(loss)
