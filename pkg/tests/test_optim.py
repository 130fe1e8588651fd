import numpy as np
import pytest

from pinnrul import (
    NadamConfig,
    NadamState,
    NumericError,
    PinnConfig,
    SynthSpec,
    augment,
    fit_norm,
    init_model,
    nadam_step,
    select_features,
    split_indices,
    synth_generate,
    train,
)


@pytest.fixture(scope="module")
def tiny_dataset():
    trajectories, _ = synth_generate(SynthSpec(n_engines=4, min_life=36, max_life=44, seed=5))
    columns = select_features(trajectories)
    samples = augment(trajectories, horizon=30, columns=columns)
    norm = fit_norm(samples)
    return samples, norm


class TestNadamStep:
    def test_zero_gradient_no_motion(self):
        params = [np.array([[1.0, -2.0]]), np.array([[0.5]])]
        grads = [np.zeros((1, 2)), np.zeros((1, 1))]
        state = NadamState.for_params(params)
        nadam_step(state, params, grads, NadamConfig())
        assert np.array_equal(params[0], np.array([[1.0, -2.0]]))
        assert np.array_equal(state.m[0], np.zeros((1, 2)))
        assert np.array_equal(state.v[1], np.zeros((1, 1)))
        assert state.step == 1

    def test_hand_computed_first_step(self):
        # theta0=1, g=2, lr=0.1: m=0.2, v=0.004, mhat=0.2/0.19, vhat=4
        params = [np.array([[1.0]])]
        grads = [np.array([[2.0]])]
        state = NadamState.for_params(params)
        nadam_step(state, params, grads, NadamConfig(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-7))
        assert float(params[0][0, 0]) == pytest.approx(0.8526316, abs=1e-6)
        assert float(state.m[0][0, 0]) == pytest.approx(0.2, abs=1e-15)
        assert float(state.v[0][0, 0]) == pytest.approx(0.004, abs=1e-15)

    def test_two_runs_bit_identical(self):
        def run():
            rng = np.random.default_rng(8)
            params = [rng.normal(size=(3, 2))]
            state = NadamState.for_params(params)
            for _ in range(25):
                nadam_step(state, params, [params[0] * 0.1], NadamConfig())
            return params[0]

        assert np.array_equal(run(), run())

    def test_non_finite_gradient_named(self):
        params = [np.ones((2, 2)), np.ones((1, 1))]
        grads = [np.ones((2, 2)), np.array([[np.nan]])]
        state = NadamState.for_params(params)
        with pytest.raises(NumericError, match="rul.b1"):
            nadam_step(state, params, grads, NadamConfig(), names=["x.W1", "rul.b1"])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NadamConfig(lr=0.0)
        with pytest.raises(ValueError):
            NadamConfig(beta1=1.0)
        with pytest.raises(ValueError):
            NadamConfig(eps=-1e-9)


class TestSplit:
    def test_eight_samples(self):
        train_idx, val_idx = split_indices(8, split_seed=0)
        assert len(train_idx) == 6 and len(val_idx) == 2

    def test_reference_dataset_counts(self):
        train_idx, val_idx = split_indices(593061, split_seed=123)
        assert len(train_idx) == 444795
        assert len(val_idx) == 148266

    @pytest.mark.parametrize("n", [1, 4, 5, 101, 4096])
    def test_partition(self, n):
        train_idx, val_idx = split_indices(n, split_seed=n)
        merged = np.sort(np.concatenate([train_idx, val_idx]))
        assert np.array_equal(merged, np.arange(n))
        assert len(val_idx) == -(-n // 4)

    def test_deterministic(self):
        a = split_indices(1000, split_seed=9)
        b = split_indices(1000, split_seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestTrain:
    def test_validation_errors(self, tiny_dataset):
        samples, norm = tiny_dataset
        model = init_model(PinnConfig.default(len(norm.columns)), norm, 0)
        with pytest.raises(ValueError):
            train(model, samples, 0, 0, epochs=1, batch_size=0)
        with pytest.raises(ValueError):
            train(model, samples, 0, 0, epochs=1, batch_size=len(samples) + 1)
        with pytest.raises(ValueError):
            train(model, samples, 0, 0, epochs=0, batch_size=64)

    def test_report_shape_and_determinism(self, tiny_dataset):
        samples, norm = tiny_dataset
        model = init_model(PinnConfig.default(len(norm.columns), pde_weight=0.2), norm, 0)

        def run():
            return train(
                model, samples, split_seed=4, init_seed=6, epochs=3, batch_size=256,
                config=NadamConfig(lr=5e-3), scheme="xavier",
            )

        m1, r1 = run()
        m2, r2 = run()
        assert len(r1.per_epoch) == 3
        assert r1.per_epoch == r2.per_epoch
        assert r1.final_rmse_val == r2.final_rmse_val
        for (_, a), (_, b) in zip(m1.parameter_items(), m2.parameter_items()):
            assert np.array_equal(a, b)

    def test_losses_decrease_and_mostly_monotone(self, tiny_dataset):
        samples, norm = tiny_dataset
        model = init_model(PinnConfig.default(len(norm.columns), pde_weight=0.2), norm, 0)
        _, report = train(
            model, samples, split_seed=1, init_seed=2, epochs=12, batch_size=256,
            config=NadamConfig(lr=3e-3), scheme="xavier",
        )
        train_totals = [row[0] for row in report.per_epoch]
        val_totals = [row[3] for row in report.per_epoch]
        assert train_totals[-1] < train_totals[0]
        assert val_totals[-1] < val_totals[0]
        drops = sum(1 for a, b in zip(train_totals, train_totals[1:]) if b <= a)
        assert drops / (len(train_totals) - 1) >= 0.8

    def test_final_rmse_consistent_with_val_mse(self, tiny_dataset):
        samples, norm = tiny_dataset
        model = init_model(PinnConfig.default(len(norm.columns)), norm, 0)
        _, report = train(
            model, samples, split_seed=2, init_seed=3, epochs=2, batch_size=512,
            config=NadamConfig(lr=3e-3), scheme="xavier",
        )
        val_mse = report.per_epoch[-1][4]
        assert report.final_rmse_val == pytest.approx(np.sqrt(val_mse) * norm.rul_max, rel=1e-12)

    def test_report_round_trips_to_dict(self, tiny_dataset):
        samples, norm = tiny_dataset
        model = init_model(PinnConfig.default(len(norm.columns)), norm, 0)
        _, report = train(
            model, samples, split_seed=1, init_seed=1, epochs=1, batch_size=512,
            config=NadamConfig(lr=1e-3),
        )
        payload = report.to_dict()
        assert payload["epochs"] == 1
        assert list(payload["per_epoch"][0]) == list(report.EPOCH_FIELDS)
