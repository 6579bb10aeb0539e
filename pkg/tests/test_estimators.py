import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmmbench.errors import DivergenceError, SingularSystemError
from gmmbench.estimators import EstimatorSpec, FittedEstimator, fit, predict
from gmmbench.estimators.network import (
    ffnn_arch,
    forward,
    init_params,
    loss_and_grads,
    residual_arch,
)
from gmmbench.estimators.ridge import _rfn_step, ridge_objective, ridge_readout
from gmmbench.estimators.serialize import dumps, load, loads, save
from gmmbench.gmm_model import NoiseModel, make_prior, signal_power
from gmmbench.metrics import nmse_db
from gmmbench.observation import Dataset, draw_system, generate_dataset, split

from oracles import finite_difference_grads

FAST_FFNN = dict(epochs=30, patience=5)


@pytest.fixture(scope="module")
def desk():
    """Desk-scale matched data: Q = P = M = 10, ring means, a = 3, b = 1."""
    prior = make_prior(10, 10, 3.0)
    noise = NoiseModel(1.0, 10)
    system = draw_system(10, 10, seed=1)
    data = generate_dataset(prior, noise, system, 3000, seed=2)
    train, test = split(data, 0.7, seed=3)
    return prior, train, test


@pytest.fixture(scope="module")
def small():
    prior = make_prior(4, 3, 2.0)
    data = generate_dataset(prior, NoiseModel(0.5, 5), draw_system(5, 4, seed=0), 300, seed=1)
    return data


def toy_dataset(x, t):
    return Dataset(np.asarray(x, dtype=float), np.asarray(t, dtype=float))


def max_rel_err(analytic, numeric):
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
        worst = max(worst, np.linalg.norm(a - n) / denom)
    return worst


class TestSpec:
    def test_defaults(self):
        assert EstimatorSpec("elm").hidden == (30,)
        assert EstimatorSpec("layered_rfn").n_layers == 20
        assert EstimatorSpec("ffnn").hidden == (64, 128, 256, 256, 128, 64)
        assert EstimatorSpec("ffnn").name == "ffnn"

    @pytest.mark.parametrize("kw", [
        dict(kind="svm"), dict(kind="elm", hidden=(0,)), dict(kind="elm", ridge=-1.0),
        dict(kind="ffnn", epochs=0), dict(kind="ffnn", batch_size=0),
        dict(kind="ffnn", activation="gelu"), dict(kind="ffnn", val_fraction=1.0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EstimatorSpec(**kw)


class TestRidge:
    def test_zero_targets(self):
        rng = np.random.default_rng(0)
        W, c = ridge_readout(rng.standard_normal((50, 8)), np.zeros((50, 3)), 1e-2)
        np.testing.assert_array_equal(W, 0.0)
        np.testing.assert_array_equal(c, 0.0)

    def test_optimality_under_perturbation(self):
        rng = np.random.default_rng(1)
        F = rng.standard_normal((80, 12))
        T = F @ rng.standard_normal((12, 4)) + 0.3 * rng.standard_normal((80, 4)) + 1.5
        lam = 0.1
        W, c = ridge_readout(F, T, lam)
        base = ridge_objective(F, T, W, c, lam)
        for _ in range(100):
            dW = rng.standard_normal(W.shape)
            dc = rng.standard_normal(c.shape)
            norm = np.sqrt(np.sum(dW**2) + np.sum(dc**2))
            dW, dc = 1e-3 * dW / norm, 1e-3 * dc / norm
            assert ridge_objective(F, T, W + dW, c + dc, lam) >= base

    def test_matches_lstsq_with_unpenalized_intercept(self):
        rng = np.random.default_rng(2)
        F = rng.standard_normal((40, 5))
        T = rng.standard_normal((40, 2))
        W, c = ridge_readout(F, T, 1e-12)
        A = np.hstack([F, np.ones((40, 1))])
        sol = np.linalg.lstsq(A, T, rcond=None)[0]
        np.testing.assert_allclose(W, sol[:5], atol=1e-8)
        np.testing.assert_allclose(c, sol[5], atol=1e-8)

    def test_singular_without_ridge(self):
        F = np.ones((10, 3))
        with pytest.raises(SingularSystemError, match="ridge > 0"):
            ridge_readout(F, np.zeros((10, 1)), 0.0)


class TestElm:
    def test_zero_targets_give_zero(self, small):
        data = Dataset(small.observations, np.zeros_like(small.targets))
        est = fit(data, EstimatorSpec("elm"))
        np.testing.assert_array_equal(est.arrays["out.W"], 0.0)
        np.testing.assert_array_equal(predict(est, small.observations), 0.0)

    def test_beats_mean_predictor_on_train(self, desk):
        prior, train, _ = desk
        est = fit(train, EstimatorSpec("elm"))
        S = signal_power(prior)
        mean_pred = np.tile(train.targets.mean(axis=0), (len(train), 1))
        assert nmse_db(predict(est, train.observations), train.targets, S) <= nmse_db(mean_pred, train.targets, S)

    def test_parameter_count(self, desk):
        _, train, _ = desk
        assert fit(train, EstimatorSpec("elm")).n_parameters == 11 * 30 + 31 * 10

    def test_hidden_weights_depend_only_on_seed(self, small):
        other = Dataset(small.observations[:50], small.targets[:50] * 2)
        a = fit(small, EstimatorSpec("elm", seed=4))
        b = fit(other, EstimatorSpec("elm", seed=4))
        np.testing.assert_array_equal(a.arrays["hidden.W"], b.arrays["hidden.W"])
        assert not np.array_equal(a.arrays["hidden.W"], fit(small, EstimatorSpec("elm", seed=5)).arrays["hidden.W"])

    def test_ridge_grid_selection(self, desk):
        _, train, _ = desk
        est = fit(train, EstimatorSpec("elm", ridge_grid=(1e-4, 1e-2, 1.0)))
        scores = est.metadata["ridge_val_relative_mse_db"]
        assert len(scores) == 3
        assert est.metadata["ridge"] == (1e-4, 1e-2, 1.0)[int(np.argmin(scores))]

    def test_empty_train(self):
        with pytest.raises(ValueError):
            fit(Dataset(np.zeros((0, 3)), np.zeros((0, 2))), EstimatorSpec("elm"))


class TestLayeredRfn:
    def test_one_layer_is_elm(self, desk):
        _, train, test = desk
        elm = fit(train, EstimatorSpec("elm", seed=9))
        rfn = fit(train, EstimatorSpec("layered_rfn", n_layers=1, seed=9))
        np.testing.assert_array_equal(predict(elm, test.observations), predict(rfn, test.observations))

    def test_selects_minimum(self, desk):
        _, train, _ = desk
        est = fit(train, EstimatorSpec("layered_rfn", seed=3))
        scores = est.metadata["layer_val_relative_mse_db"]
        assert 1 <= len(scores) <= 20
        assert est.metadata["selected_layer"] == int(np.argmin(scores)) + 1
        assert est.config["n_layers"] == est.metadata["selected_layer"]

    def test_no_worse_than_elm(self, desk):
        prior, train, test = desk
        S = signal_power(prior)
        elm = nmse_db(predict(fit(train, EstimatorSpec("elm", seed=3)), test.observations), test.targets, S)
        rfn = nmse_db(predict(fit(train, EstimatorSpec("layered_rfn", seed=3)), test.observations), test.targets, S)
        assert rfn <= elm + 0.3

    def test_layer_cap(self, small):
        est = fit(small, EstimatorSpec("layered_rfn", n_layers=3, layer_tol_db=-100.0))
        assert len(est.metadata["layer_val_relative_mse_db"]) == 3

    def test_carry_passes_previous_estimate(self):
        """relu(y) - relu(-y) = y, so every later layer sees the previous estimate unchanged."""
        rng = np.random.default_rng(0)
        h = np.maximum(rng.standard_normal((20, 7)), 0)
        arrays = {
            "readout1.W": rng.standard_normal((7, 3)), "readout1.b": rng.standard_normal(3),
            "layer2.W": rng.standard_normal((7, 5)), "layer2.b": rng.standard_normal(5),
        }
        h2 = _rfn_step(arrays, lambda z: np.maximum(z, 0.0), h, 2)
        y = h @ arrays["readout1.W"] + arrays["readout1.b"]
        assert h2.shape == (20, 3 + 3 + 5)
        np.testing.assert_allclose(h2[:, :3] - h2[:, 3:6], y, atol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_ffnn(self, activation):
        rng = np.random.default_rng(0)
        ops = ffnn_arch(3)
        widths = {"fc0": 6, "fc1": 5, "fc2": 4, "out": 3}
        params = init_params(ops, 4, widths, activation, rng)
        for k in params:
            if k.endswith(".b"):
                params[k] = 0.1 * rng.standard_normal(params[k].shape)
        x, t = rng.standard_normal((7, 4)), rng.standard_normal((7, 3))
        _, grads = loss_and_grads(ops, params, x, t, activation)
        numeric = finite_difference_grads(lambda: loss_and_grads(ops, params, x, t, activation)[0], params)
        assert max_rel_err(grads, numeric) < 1e-5

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_residual(self, activation):
        rng = np.random.default_rng(1)
        ops = residual_arch(2)
        widths = {"stem": 5, "out": 2}
        for i in range(2):
            widths[f"block{i}.fc1"] = widths[f"block{i}.fc2"] = 5
        params = init_params(ops, 3, widths, activation, rng)
        for k in params:
            if k.endswith(".b"):
                params[k] = 0.1 * rng.standard_normal(params[k].shape)
        x, t = rng.standard_normal((6, 3)), rng.standard_normal((6, 2))
        _, grads = loss_and_grads(ops, params, x, t, activation)
        numeric = finite_difference_grads(lambda: loss_and_grads(ops, params, x, t, activation)[0], params)
        assert set(grads) == set(params)
        assert max_rel_err(grads, numeric) < 1e-5

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000), depth=st.integers(1, 3), width=st.integers(2, 6))
    def test_random_networks(self, seed, depth, width):
        rng = np.random.default_rng(seed)
        ops = ffnn_arch(depth) if seed % 2 else residual_arch(depth)
        names = [op[1] for op in ops if op[0] == "dense"]
        names += [sub[1] for op in ops if op[0] == "res" for sub in op[1] if sub[0] == "dense"]
        widths = {n: width for n in names}
        widths["out"] = 2
        params = init_params(ops, 3, widths, "tanh", rng)
        for k in params:
            params[k] += 0.1 * rng.standard_normal(params[k].shape)
        x, t = rng.standard_normal((5, 3)), rng.standard_normal((5, 2))
        _, grads = loss_and_grads(ops, params, x, t, "tanh")
        numeric = finite_difference_grads(lambda: loss_and_grads(ops, params, x, t, "tanh")[0], params)
        assert max_rel_err(grads, numeric) < 1e-5


class TestFfnn:
    def test_parameter_count(self, small):
        data = Dataset(np.zeros((20, 10)), np.zeros((20, 10)))
        est = fit(data, EstimatorSpec("ffnn", epochs=1))
        assert est.n_parameters == 149_642

    def test_zero_targets_loss_decreases(self, small):
        data = Dataset(small.observations, np.zeros_like(small.targets))
        est = fit(data, EstimatorSpec("ffnn", hidden=(16, 16), epochs=5, patience=100, learning_rate=1e-3))
        losses = est.metadata["epoch_losses"]
        assert len(losses) == 5
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_divergence(self, small):
        data = Dataset(small.observations * 1e3, small.targets * 1e160)
        with pytest.raises(DivergenceError) as info:
            fit(data, EstimatorSpec("ffnn", hidden=(8,), learning_rate=10.0, epochs=50))
        assert info.value.epoch >= 1
        assert info.value.learning_rate == 10.0

    def test_learns_desk_task(self, desk):
        prior, train, test = desk
        est = fit(train, EstimatorSpec("ffnn", **FAST_FFNN))
        assert nmse_db(predict(est, test.observations), test.targets, signal_power(prior)) < -3.0
        assert est.metadata["best_epoch"] <= est.metadata["epochs_run"]

    def test_output_bounded_on_training_points(self, small):
        est = fit(small, EstimatorSpec("ffnn", hidden=(32, 32), **FAST_FFNN))
        out = predict(est, small.observations)
        assert np.all(np.isfinite(out))
        bound = 10 * np.linalg.norm(small.targets, axis=1).max()
        assert np.linalg.norm(out, axis=1).max() <= bound

    def test_standardize_recorded(self, small):
        est = fit(small, EstimatorSpec("ffnn", hidden=(8,), epochs=2, standardize=True))
        assert est.metadata["standardize"] is True
        assert "scale.x_mean" in est.arrays
        assert est.n_parameters == 5 * 8 + 8 + 8 * 4 + 4


class TestResidualMlp:
    def test_zero_branches_are_identity(self):
        rng = np.random.default_rng(0)
        ops = residual_arch(4)
        widths = {"stem": 6, "out": 3}
        for i in range(4):
            widths[f"block{i}.fc1"] = widths[f"block{i}.fc2"] = 6
        params = init_params(ops, 5, widths, "relu", rng, zero_branch_out=True)
        x = rng.standard_normal((10, 5))
        expected = (x @ params["stem.W"] + params["stem.b"]) @ params["out.W"] + params["out.b"]
        np.testing.assert_allclose(forward(ops, params, x, "relu"), expected, atol=1e-14)

    def test_blocks_preserve_width(self, small):
        est = fit(small, EstimatorSpec("residual_mlp", hidden=(12,), n_layers=3, epochs=2))
        for i in range(3):
            assert est.arrays[f"block{i}.fc1.W"].shape == (12, 12)
            assert est.arrays[f"block{i}.fc2.W"].shape == (12, 12)

    def test_no_blocks_is_least_squares(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((600, 4))
        A = rng.standard_normal((4, 3))
        t = x @ A + np.array([0.5, -1.0, 2.0])
        est = fit(toy_dataset(x, t), EstimatorSpec("residual_mlp", hidden=(4,), n_layers=0,
                                                   learning_rate=1e-2, epochs=400, patience=40))
        lsq = np.hstack([x, np.ones((600, 1))]) @ np.linalg.lstsq(np.hstack([x, np.ones((600, 1))]), t, rcond=None)[0]
        power = np.mean(np.sum(t**2, axis=1))
        gap = np.mean(np.sum((predict(est, x) - lsq) ** 2, axis=1)) / power
        assert gap < 1e-3

    def test_learns_desk_task(self, desk):
        prior, train, test = desk
        est = fit(train, EstimatorSpec("residual_mlp", **FAST_FFNN))
        assert nmse_db(predict(est, test.observations), test.targets, signal_power(prior)) < -4.0


@pytest.fixture(scope="module")
def fitted(small):
    return [
        fit(small, EstimatorSpec("elm")),
        fit(small, EstimatorSpec("layered_rfn", n_layers=4)),
        fit(small, EstimatorSpec("ffnn", hidden=(16, 8), epochs=3)),
        fit(small, EstimatorSpec("residual_mlp", hidden=(8,), n_layers=2, epochs=3)),
    ]


class TestPredict:
    def test_batch_equals_loop(self, fitted):
        x = np.random.default_rng(0).standard_normal((100, 5))
        for est in fitted:
            batch = predict(est, x)
            assert batch.shape == (100, 4)
            loop = np.array([predict(est, xi) for xi in x])
            np.testing.assert_allclose(batch, loop, atol=1e-12, rtol=0)

    def test_single_shape(self, fitted):
        for est in fitted:
            assert predict(est, np.zeros(5)).shape == (4,)

    def test_dimension_mismatch(self, fitted):
        for est in fitted:
            with pytest.raises(ValueError):
                predict(est, np.zeros(6))
            with pytest.raises(ValueError):
                predict(est, np.zeros((3, 4)))

    def test_zero_output_weights(self, fitted):
        elm = fitted[0]
        arrays = {k: np.array(v) for k, v in elm.arrays.items()}
        arrays["out.W"][:] = 0.0
        arrays["out.b"][:] = 0.0
        zeroed = FittedEstimator("elm", elm.P, elm.Q, arrays, elm.config)
        np.testing.assert_array_equal(predict(zeroed, np.ones((3, 5))), 0.0)

    def test_zero_weight_network(self, fitted):
        net = fitted[2]
        arrays = {k: np.zeros_like(v) for k, v in net.arrays.items()}
        zeroed = FittedEstimator(net.kind, net.P, net.Q, arrays, net.config)
        np.testing.assert_array_equal(predict(zeroed, np.ones((3, 5))), 0.0)

    def test_weights_read_only(self, fitted):
        with pytest.raises(ValueError):
            fitted[0].arrays["out.W"][0, 0] = 1.0

    @pytest.mark.parametrize("kind", ["elm", "layered_rfn", "ffnn", "residual_mlp"])
    def test_deterministic(self, small, kind):
        spec = EstimatorSpec(kind, epochs=3, seed=11)
        a, b = fit(small, spec), fit(small, spec)
        assert dumps(a) == dumps(b)
        np.testing.assert_array_equal(predict(a, small.observations), predict(b, small.observations))

    def test_serialization_round_trip(self, fitted, tmp_path):
        x = np.random.default_rng(1).standard_normal((20, 5))
        for i, est in enumerate(fitted):
            back = loads(dumps(est))
            assert back.kind == est.kind and (back.P, back.Q) == (est.P, est.Q)
            np.testing.assert_array_equal(predict(back, x), predict(est, x))
            path = tmp_path / f"est{i}.bin"
            save(est, path)
            np.testing.assert_array_equal(predict(load(path), x), predict(est, x))

    def test_blob_header(self, fitted):
        blob = dumps(fitted[0])
        assert blob.startswith(b"GMMBEST\0")
        with pytest.raises(ValueError):
            loads(blob + b"\0")
        with pytest.raises(ValueError):
            loads(b"NOTMAGIC" + blob[8:])
