import numpy as np
import pytest

from pinnrul import Graph, GraphMlp, MlpParams, MlpSpec, init_params

from conftest import fd_tolerance_ok

TANH_HALF = 0.46211715726000974


def plain_forward(params, x):
    """Straight-line reference evaluation, independent of the graph."""
    h = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ h + b
        if i < last:
            h = np.tanh(z) if params.spec.hidden == "tanh" else np.maximum(z, 0.0)
        else:
            h = np.tanh(z) if params.spec.output == "tanh" else z
    return h


def eval_forward(params, x):
    g = Graph()
    mlp = GraphMlp(g, params)
    xin = g.input((params.spec.d_in, 1))
    out = mlp.forward(xin)
    g.eval({xin: np.asarray(x, dtype=np.float64).reshape(-1, 1)})
    return g.value(out)


def eval_tangent(params, x, coord):
    g = Graph()
    mlp = GraphMlp(g, params)
    xin = g.input((params.spec.d_in, 1))
    out, tan = mlp.forward_tangent(xin, coord)
    g.eval({xin: np.asarray(x, dtype=np.float64).reshape(-1, 1)})
    return g.value(out), g.value(tan)


class TestSpecAndInit:
    def test_spec_needs_hidden_layer(self):
        with pytest.raises(ValueError):
            MlpSpec((3, 1))

    def test_spec_rejects_zero_width(self):
        with pytest.raises(ValueError):
            MlpSpec((3, 0, 1))

    def test_same_seed_same_bits(self):
        spec = MlpSpec((2, 3, 1))
        a = init_params(spec, "standard-normal", 99)
        b = init_params(spec, "standard-normal", 99)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            assert np.array_equal(ba, bb)

    def test_layer_shapes_2_3_1(self):
        params = init_params(MlpSpec((2, 3, 1)), "standard-normal", 0)
        assert params.weights[0].shape == (3, 2)
        assert params.biases[0].shape == (3, 1)
        assert params.weights[1].shape == (1, 3)
        assert params.biases[1].shape == (1, 1)

    def test_standard_normal_statistics(self):
        # > 1e4 draws across one wide layer pair
        params = init_params(MlpSpec((100, 99, 1)), "standard-normal", 1234)
        flat = np.concatenate([w.ravel() for w in params.weights] + [b.ravel() for b in params.biases])
        assert flat.size > 10_000
        assert abs(flat.mean()) < 0.05
        assert abs(flat.var() - 1.0) < 0.1

    def test_xavier_scale_and_zero_bias(self):
        spec = MlpSpec((8, 6, 1))
        params = init_params(spec, "xavier", 5)
        assert np.array_equal(params.biases[0], np.zeros((6, 1)))
        std = params.weights[0].std()
        assert 0.3 * np.sqrt(2 / 14) < std < 3.0 * np.sqrt(2 / 14)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            init_params(MlpSpec((2, 3, 1)), "orthogonal", 0)

    def test_params_shape_mismatch_rejected(self):
        spec = MlpSpec((2, 3, 1))
        with pytest.raises(ValueError):
            MlpParams(spec, [np.zeros((3, 3)), np.zeros((1, 3))], [np.zeros((3, 1)), np.zeros((1, 1))])


class TestForward:
    def test_zero_params_zero_output(self):
        spec = MlpSpec((3, 4, 4, 1))
        params = MlpParams(
            spec,
            [np.zeros(ws) for ws, _ in spec.layer_shapes()],
            [np.zeros(bs) for _, bs in spec.layer_shapes()],
        )
        out = eval_forward(params, [0.7, -2.0, 5.5])
        assert np.array_equal(out, np.zeros((1, 1)))

    def test_hand_evaluated_1_1_1(self):
        spec = MlpSpec((1, 1, 1))
        params = MlpParams(spec, [np.array([[2.0]]), np.array([[1.0]])], [np.zeros((1, 1)), np.zeros((1, 1))])
        out = eval_forward(params, [0.25])
        assert float(out[0, 0]) == pytest.approx(TANH_HALF, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_straight_line_reference(self, seed):
        params = init_params(MlpSpec((2, 3, 1)), "standard-normal", seed)
        x = np.random.default_rng(seed).normal(size=2)
        assert np.abs(eval_forward(params, x) - plain_forward(params, x)).max() <= 1e-12

    def test_batched_forward_equals_per_column(self):
        params = init_params(MlpSpec((3, 5, 2)), "xavier", 3)
        xs = np.random.default_rng(0).normal(size=(3, 4))
        g = Graph()
        mlp = GraphMlp(g, params)
        xin = g.input((3, 4))
        out = mlp.forward(xin)
        g.eval({xin: xs})
        batch = g.value(out)
        for j in range(4):
            assert np.abs(batch[:, j : j + 1] - plain_forward(params, xs[:, j])).max() <= 1e-12

    def test_reference_architecture_shapes(self):
        # latent net: five 3-unit hidden layers; regression net: five 10-unit layers
        x_params = init_params(MlpSpec((15, 3, 3, 3, 3, 3, 1)), "standard-normal", 0)
        rul_params = init_params(MlpSpec((2, 10, 10, 10, 10, 10, 1)), "standard-normal", 1)
        for params, n in ((x_params, 15), (rul_params, 2)):
            g = Graph()
            mlp = GraphMlp(g, params)
            xin = g.input((n, 7))
            out = mlp.forward(xin)
            assert g.shape_of(out) == (1, 7)
            assert len(params.weights) == 6

    def test_input_width_mismatch(self):
        params = init_params(MlpSpec((2, 3, 1)), "standard-normal", 0)
        g = Graph()
        mlp = GraphMlp(g, params)
        xin = g.input((3, 1))
        with pytest.raises(ValueError):
            mlp.forward(xin)


class TestForwardTangent:
    def test_linear_chain_at_zero(self):
        # tanh'(0) = 1, so the tangent collapses to the weight product
        a, b = 1.7, -0.6
        spec = MlpSpec((1, 1, 1))
        params = MlpParams(spec, [np.array([[a]]), np.array([[b]])], [np.zeros((1, 1)), np.zeros((1, 1))])
        _, tan = eval_tangent(params, [0.0], 0)
        assert float(tan[0, 0]) == pytest.approx(a * b, abs=1e-15)

    def test_zero_weights_zero_tangent(self):
        spec = MlpSpec((2, 3, 1))
        params = MlpParams(
            spec,
            [np.zeros(ws) for ws, _ in spec.layer_shapes()],
            [np.random.default_rng(0).normal(size=bs) for _, bs in spec.layer_shapes()],
        )
        _, tan = eval_tangent(params, [0.4, -0.2], 1)
        assert np.array_equal(tan, np.zeros((1, 1)))

    def test_relu_hidden_rejected(self):
        params = init_params(MlpSpec((2, 3, 1), hidden="relu"), "standard-normal", 0)
        g = Graph()
        mlp = GraphMlp(g, params)
        xin = g.input((2, 1))
        with pytest.raises(ValueError, match="tanh"):
            mlp.forward_tangent(xin, 0)

    def test_one_hot_vector_accepted(self):
        params = init_params(MlpSpec((3, 3, 1)), "standard-normal", 4)
        x = np.array([0.3, -0.5, 0.9])
        _, by_index = eval_tangent(params, x, 2)
        _, by_vector = eval_tangent(params, x, np.array([0.0, 0.0, 1.0]))
        assert np.array_equal(by_index, by_vector)

    def test_bad_tangent_vectors_rejected(self):
        params = init_params(MlpSpec((3, 3, 1)), "standard-normal", 4)
        g = Graph()
        mlp = GraphMlp(g, params)
        xin = g.input((3, 1))
        with pytest.raises(ValueError):
            mlp.forward_tangent(xin, np.array([0.0, 2.0, 0.0]))
        with pytest.raises(ValueError):
            mlp.forward_tangent(xin, 3)

    @pytest.mark.parametrize("widths", [(2, 3, 3, 1), (3, 3, 3, 3, 3, 3, 1)])
    def test_matches_finite_differences(self, widths):
        # 20 draws here; the acceptance suite runs the full 100 per spec
        h = 1e-6
        for seed in range(20):
            rng = np.random.default_rng((seed, widths[0]))
            params = init_params(MlpSpec(widths), "standard-normal", seed)
            x = rng.normal(size=widths[0])
            coord = int(rng.integers(widths[0]))
            _, tan = eval_tangent(params, x, coord)
            step = np.zeros(widths[0])
            step[coord] = h
            fd = (plain_forward(params, x + step) - plain_forward(params, x - step)) / (2 * h)
            assert fd_tolerance_ok(tan[0, 0], fd[0, 0], rel=1e-5, abs_tol=1e-8)

    def test_tangent_weight_gradient_matches_fd(self):
        # reverse-mode through the tangent output = mixed second derivative
        params = init_params(MlpSpec((2, 3, 1)), "standard-normal", 11)
        x = np.array([0.37, -0.81])

        def tangent_value():
            _, tan = eval_tangent(params, x, 0)
            return float(tan[0, 0])

        g = Graph()
        mlp = GraphMlp(g, params)
        xin = g.input((2, 1))
        _, tan = mlp.forward_tangent(xin, 0)
        g.eval({xin: x.reshape(2, 1)})
        grads = g.grad(tan)

        h = 1e-6
        for li, (w_id, _) in enumerate(mlp.layers):
            buf = params.weights[li]
            it = np.nditer(buf, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = buf[idx]
                buf[idx] = old + h
                up = tangent_value()
                buf[idx] = old - h
                down = tangent_value()
                buf[idx] = old
                fd = (up - down) / (2 * h)
                assert fd_tolerance_ok(grads[w_id][idx], fd, rel=1e-4, abs_tol=1e-8)
