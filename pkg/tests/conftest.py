"""Shared helpers: random graph/model builders and finite-difference checks."""

import numpy as np
import pytest

from pinnrul import (
    AugmentedSamples,
    Graph,
    MlpSpec,
    NormStats,
    PinnConfig,
    init_model,
)

FD_H = 1e-5


def fd_tolerance_ok(analytic, numeric, rel=1e-4, abs_tol=1e-8):
    """Relative comparison away from zero, absolute near zero."""
    analytic = float(analytic)
    numeric = float(numeric)
    if max(abs(analytic), abs(numeric)) <= 1e-3:
        return abs(analytic - numeric) <= abs_tol or abs(analytic - numeric) <= rel * max(
            abs(analytic), abs(numeric)
        )
    return abs(analytic - numeric) <= rel * max(abs(analytic), abs(numeric))


def random_graph(seed):
    """Small random DAG over the full primitive set with a scalar root.

    Returns (graph, parameter ids, input bindings). relu inputs are kept
    away from 0 by construction so finite differences stay valid.
    """
    rng = np.random.default_rng(seed)
    g = Graph()
    shapes = [(1, 1), (2, 1), (2, 2), (3, 2)]
    pool = []
    bindings = {}
    for _ in range(rng.integers(2, 4)):
        shape = shapes[rng.integers(len(shapes))]
        p = g.parameter(shape)
        g.set_param(p, rng.uniform(0.5, 1.5, shape) * rng.choice([-1.0, 1.0], shape))
        pool.append(p)
    inp = g.input((2, 2))
    bindings[inp] = rng.uniform(0.5, 1.5, (2, 2))
    pool.append(inp)

    for _ in range(rng.integers(4, 9)):
        op = rng.choice(["tanh", "square", "scale", "add", "multiply", "subtract", "matmul", "concat", "relu"])
        a = pool[rng.integers(len(pool))]
        if op in ("tanh", "square", "relu"):
            pool.append(getattr(g, op)(a))
        elif op == "scale":
            pool.append(g.scale(a, float(rng.uniform(0.5, 2.0))))
        elif op in ("add", "multiply", "subtract"):
            mates = [n for n in pool if g.shape_of(n) == g.shape_of(a)]
            pool.append(getattr(g, op)(a, mates[rng.integers(len(mates))]))
        elif op == "concat":
            mates = [n for n in pool if g.shape_of(n)[1] == g.shape_of(a)[1]]
            pool.append(g.concat([a, mates[rng.integers(len(mates))]]))
        else:  # matmul
            mates = [n for n in pool if g.shape_of(n)[0] == g.shape_of(a)[1]]
            if mates:
                pool.append(g.matmul(a, mates[rng.integers(len(mates))]))
    root = g.mean(g.square(pool[-1]))
    params = sorted(g.parameters)
    return g, params, bindings, root


def relu_inputs_safe(g, values, margin=1e-3):
    """True when no relu input entry sits within ``margin`` of 0."""
    for nid, node in enumerate(g.nodes):
        if node.kind == "relu":
            if np.abs(values[node.inputs[0]]).min() < margin:
                return False
    return True


def small_random_model(seed, d_oc=2, pde_weight=1.0):
    """Tiny random three-network model with a fitted-looking norm."""
    rng = np.random.default_rng(seed)
    hidden = lambda: tuple(int(rng.integers(2, 4)) for _ in range(int(rng.integers(1, 3))))
    config = PinnConfig(
        d_oc=d_oc,
        x_spec=MlpSpec((d_oc + 1, *hidden(), 1), hidden="tanh", output="linear"),
        rul_spec=MlpSpec((2, *hidden(), 1), hidden="tanh", output="linear"),
        dyn_spec=MlpSpec((2, *hidden(), 1), hidden="relu", output="linear"),
        pde_weight=pde_weight,
    )
    norm = NormStats(
        means=rng.normal(0, 1, d_oc),
        stds=rng.uniform(0.5, 2.0, d_oc),
        rul_max=float(rng.uniform(50, 150)),
        columns=[f"s{i + 1}" for i in range(d_oc)],
    )
    return init_model(config, norm, int(rng.integers(0, 2**32)), scheme="xavier")


def random_batch(model, seed, n=4):
    rng = np.random.default_rng(seed)
    d = model.config.d_oc
    return AugmentedSamples(
        unit=np.ones(n, dtype=np.int64),
        cycle=np.arange(1, n + 1),
        t=rng.integers(0, 31, n),
        rul=rng.uniform(0, model.norm.rul_max, n),
        oc=model.norm.means + model.norm.stds * rng.normal(0, 1, (n, d)),
        columns=model.norm.columns,
    )


def fd_gradient(model, batch, name, index, h=FD_H):
    """Central finite difference of the total cost w.r.t. one entry."""
    buf = dict(model.parameter_items())[name]
    old = buf[index]
    buf[index] = old + h
    up = model.cost_values(batch)[2]
    buf[index] = old - h
    down = model.cost_values(batch)[2]
    buf[index] = old
    return (up - down) / (2 * h)


def dyn_preactivations_safe(model, batch, margin=1e-3):
    """Keep finite differences honest: no relu pre-activation near 0.

    Replays the dynamics network input from the cost wiring and checks
    each relu layer's pre-activation entries.
    """
    w = model._eval_batch(batch.oc, batch.t, batch.rul)
    h = np.vstack([w.graph.value(w.dx_dt), w.graph.value(w.drul_dx)])
    params = model.dyn_params
    n_layers = len(params.weights)
    for i, (wgt, bias) in enumerate(zip(params.weights, params.biases)):
        z = wgt @ h + bias
        if i < n_layers - 1:
            if np.abs(z).min() < margin:
                return False
            h = np.maximum(z, 0.0)
        else:
            h = z
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
