import math

import numpy as np
import pytest

from models.params_model import GruParams, MlpParams
from services import numcore as nc
from services.numcore import ParamStore, Tape, Tensor, finite_difference_check
from utils.errors import ContractError, EmptyReductionError, ShapeError


def grad_of(f, x):
    x = Tensor(x, requires_grad=True)
    with Tape() as tape:
        loss = f(x)
    nc.backward(tape, loss)
    return x.grad


def weighted(t: Tensor, seed: int = 3) -> Tensor:
    return nc.sum_(nc.hadamard(t, Tensor(np.random.default_rng(seed).normal(size=t.shape))))


# --- matmul ---

def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nc.matmul(Tensor(np.eye(2)), a).data, a.data)


def test_matmul_orthogonal_vectors():
    assert nc.matmul(Tensor([[1.0, 0.0]]), Tensor([[0.0], [1.0]])).data.tolist() == [[0.0]]


def test_matmul_gradients_match_finite_differences(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    assert finite_difference_check(lambda x: weighted(nc.matmul(x, Tensor(b))), Tensor(a)) < 1e-6
    assert finite_difference_check(lambda x: weighted(nc.matmul(Tensor(a), x)), Tensor(b)) < 1e-6


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# --- activaciones ---

def test_activation_reference_values():
    assert nc.sigmoid(Tensor(0.0)).item() == 0.5
    assert nc.tanh(Tensor(0.0)).item() == 0.0
    assert nc.leaky_relu(Tensor(-1.0)).item() == pytest.approx(-0.2)


def test_activations_stay_finite_at_extreme_inputs():
    x = Tensor([-1e3, -50.0, 0.0, 50.0, 1e3])
    for kind in ("sigmoid", "tanh", "leaky_relu"):
        out = nc.activation(x, kind)
        assert np.all(np.isfinite(out.data))
    assert np.all((nc.sigmoid(x).data >= 0.0) & (nc.sigmoid(x).data <= 1.0))


def test_unknown_activation_is_rejected():
    with pytest.raises(ContractError):
        nc.activation(Tensor([1.0]), "relu6")


def test_activation_gradients(rng):
    x = Tensor(rng.normal(size=5))
    for kind in ("sigmoid", "tanh", "leaky_relu"):
        assert finite_difference_check(lambda t: weighted(nc.activation(t, kind)), x) < 1e-6


# --- softmax ---

def test_softmax_reference_values():
    np.testing.assert_allclose(nc.softmax_rows(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(nc.softmax_rows(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(nc.softmax_rows(Tensor([math.log(2), math.log(1)])).data, [2 / 3, 1 / 3])


def test_softmax_rows_are_probability_vectors_and_shift_invariant(rng):
    x = rng.normal(scale=10.0, size=(6, 5))
    out = nc.softmax_rows(Tensor(x)).data
    assert np.all(out >= 0.0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    shifted = nc.softmax_rows(Tensor(x + rng.normal(size=(6, 1)) * 100)).data
    np.testing.assert_allclose(shifted, out, atol=1e-12)


def test_softmax_gradient(rng):
    assert finite_difference_check(lambda t: weighted(nc.softmax_rows(t)), Tensor(rng.normal(size=(3, 4)))) < 1e-6


# --- estructura ---

def test_concat_and_split_round_trip(rng):
    a, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(4, 3)))
    joined = nc.concat([a, b], axis=0)
    assert joined.shape == (6, 3)
    left, right = nc.split(joined, [2, 4], axis=0)
    np.testing.assert_array_equal(left.data, a.data)
    np.testing.assert_array_equal(right.data, b.data)
    assert nc.concat([Tensor([1.0]), Tensor([2.0])]).data.tolist() == [1.0, 2.0]


def test_concat_errors():
    with pytest.raises(ContractError):
        nc.concat([])
    with pytest.raises(ShapeError):
        nc.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))], axis=0)


def test_concat_gradient_splits_back(rng):
    b = Tensor(rng.normal(size=(2, 2)))
    assert finite_difference_check(lambda a: weighted(nc.concat([a, b], axis=1)), Tensor(rng.normal(size=(2, 3)))) < 1e-8


def test_getitem_accumulates_repeated_indices():
    g = grad_of(lambda x: nc.sum_(nc.getitem(x, [0, 0, 1])), [1.0, 2.0, 3.0])
    assert g.tolist() == [2.0, 1.0, 0.0]


def test_reshape_rejects_bad_shape():
    with pytest.raises(ShapeError):
        nc.reshape(Tensor(np.ones(6)), (4, 2))
    assert nc.reshape(Tensor(np.ones(6)), (2, -1)).shape == (2, 3)


# --- reducciones ---

def test_reductions():
    assert nc.mean(Tensor([2.0, 4.0])).item() == 3.0
    assert nc.max_(Tensor([1.0, 5.0, 3.0])).item() == 5.0
    assert grad_of(lambda x: nc.max_(x), [1.0, 5.0, 3.0]).tolist() == [0.0, 1.0, 0.0]
    assert grad_of(lambda x: nc.sum_(x), [1.0, 5.0, 3.0]).tolist() == [1.0, 1.0, 1.0]


def test_max_tie_routes_gradient_to_first_index():
    assert grad_of(lambda x: nc.max_(x), [5.0, 5.0, 1.0]).tolist() == [1.0, 0.0, 0.0]
    g = grad_of(lambda x: nc.sum_(nc.max_(x, axis=1)), [[2.0, 2.0], [0.0, 3.0]])
    assert g.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_mean_over_empty_axis_is_an_explicit_error():
    with pytest.raises(EmptyReductionError):
        nc.mean(Tensor(np.zeros((0,))))
    with pytest.raises(EmptyReductionError):
        nc.mean(Tensor(np.zeros((2, 0))), axis=1)


def test_axis_reduction_gradients(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    for kind in ("sum", "mean", "max"):
        assert finite_difference_check(lambda t: weighted(nc.reduce(t, kind, axis=0)), x) < 1e-6


# --- hadamard y difusión ---

def test_hadamard_identities(rng):
    a = Tensor(rng.normal(size=(2, 3)))
    np.testing.assert_array_equal(nc.hadamard(a, nc.ones((2, 3))).data, a.data)
    np.testing.assert_array_equal(nc.hadamard(a, nc.zeros((2, 3))).data, np.zeros((2, 3)))


def test_hadamard_broadcast_gradient(rng):
    volume = Tensor(rng.normal(size=(3, 4, 5)))
    channel = Tensor(rng.normal(size=(3, 1, 1)))
    assert finite_difference_check(lambda c: weighted(nc.hadamard(volume, c)), channel) < 1e-6
    assert finite_difference_check(lambda v: weighted(nc.hadamard(v, channel)), volume, coords=12) < 1e-6


def test_hadamard_rejects_non_broadcastable():
    with pytest.raises(ShapeError):
        nc.hadamard(Tensor(np.ones((3, 4))), Tensor(np.ones((2, 4))))


def test_sqrt_gradient_is_zero_below_floor():
    assert grad_of(lambda x: nc.sum_(nc.sqrt(x)), [0.0, 4.0]).tolist() == [0.0, 0.25]


def test_maximum_tie_prefers_first_argument():
    a, b = Tensor([1.0, 2.0], requires_grad=True), Tensor([1.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = nc.sum_(nc.maximum(a, b))
    nc.backward(tape, loss)
    assert a.grad.tolist() == [1.0, 0.0]
    assert b.grad.tolist() == [0.0, 1.0]


# --- operadores espaciales ---

def test_conv2d_unit_kernel_is_identity(rng):
    x = Tensor(rng.normal(size=(1, 5, 5)))
    np.testing.assert_array_equal(nc.conv2d(x, nc.ones((1, 1, 1, 1))).data, x.data)


def test_conv2d_ones_kernel_on_constant_interior():
    out = nc.conv2d(Tensor(np.full((1, 5, 5), 2.0)), nc.ones((1, 1, 3, 3))).data
    np.testing.assert_allclose(out[0, 1:-1, 1:-1], 18.0)
    assert out[0, 0, 0] == pytest.approx(8.0)


def test_conv2d_stride_output_size():
    assert nc.conv2d(Tensor(np.ones((2, 5, 5))), nc.ones((3, 2, 3, 3)), stride=2).shape == (3, 3, 3)


def test_conv2d_gradients(rng):
    x, k = Tensor(rng.normal(size=(1, 4, 4))), Tensor(rng.normal(size=(2, 1, 3, 3)))
    assert finite_difference_check(lambda t: weighted(nc.conv2d(t, k)), x) < 1e-6
    assert finite_difference_check(lambda t: weighted(nc.conv2d(x, t)), k) < 1e-6


def test_conv2d_strided_gradient(rng):
    x, k = Tensor(rng.normal(size=(2, 5, 5))), Tensor(rng.normal(size=(1, 2, 3, 3)))
    assert finite_difference_check(lambda t: weighted(nc.conv2d(t, k, stride=2)), x) < 1e-6


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        nc.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


def test_window_mean(rng):
    np.testing.assert_allclose(nc.window_mean(Tensor(np.full((4, 6), 0.3)), 3).data, 0.3)
    x = Tensor(rng.normal(size=(5, 4)))
    assert finite_difference_check(lambda t: weighted(nc.window_mean(t, 3)), x) < 1e-6
    with pytest.raises(ContractError):
        nc.window_mean(x, 4)


# --- GRU ---

def gru(d=3, e=2, seed=0):
    return GruParams.create(ParamStore(seed), "gru", d, e)


def test_gru_zero_params_and_state_give_zero():
    params = gru()
    for name in GruParams.model_fields:
        setattr(params, name, nc.zeros(getattr(params, name).shape))
    out = nc.gru_cell(Tensor([0.7, -0.3]), nc.zeros((3,)), params)
    np.testing.assert_array_equal(out.data, np.zeros(3))


def test_gru_saturated_update_gate_returns_candidate(rng):
    params = gru()
    params.b_z = Tensor(np.full(3, 50.0))
    w, h = rng.normal(size=2), np.tanh(rng.normal(size=3))
    r = 1.0 / (1.0 + np.exp(-(params.W_r.data @ w + params.b_r.data + params.U_r.data @ h)))
    candidate = np.tanh(params.W_h.data @ w + params.b_h.data + params.U_h.data @ (r * h))
    out = nc.gru_cell(Tensor(w), Tensor(h), params).data
    np.testing.assert_allclose(out, candidate, atol=1e-3)


def test_gru_output_bounded(rng):
    params = gru()
    out = nc.gru_cell(Tensor(rng.normal(size=2)), Tensor(np.tanh(rng.normal(size=3))), params).data
    assert np.all(np.abs(out) < 1.0)


def test_gru_gradients_for_every_parameter(rng, fd):
    params = gru()
    w, h = Tensor(rng.normal(size=2)), Tensor(np.tanh(rng.normal(size=3)))
    for name in GruParams.model_fields:
        assert fd(params, name, lambda: weighted(nc.gru_cell(w, h, params))) < 1e-4, name


def test_gru_rejects_wrong_sizes():
    with pytest.raises(ShapeError):
        nc.gru_cell(Tensor(np.ones(3)), nc.zeros((3,)), gru())


# --- backward ---

def test_backward_simple_losses(rng):
    x = rng.normal(size=4)
    np.testing.assert_array_equal(grad_of(lambda t: nc.sum_(t), x), np.ones(4))
    np.testing.assert_allclose(grad_of(lambda t: nc.scale(nc.sum_(nc.hadamard(t, t)), 0.5), x), x)


def test_backward_three_layer_mlp(rng, fd):
    store = ParamStore(1)
    first = MlpParams.create(store, "a", 3, 5, 4)
    last = store.create("last", (2, 4))
    x = Tensor(rng.normal(size=3))

    def loss():
        return weighted(nc.linear(last, nc.tanh(nc.mlp(x, first))))

    for name in ("W1", "b1", "W2"):
        assert fd(first, name, loss) < 1e-4


def test_backward_requires_scalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = nc.scale(x, 2.0)
    with pytest.raises(ContractError):
        nc.backward(tape, y)


def test_unreached_leaves_get_zero_gradient():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    unused = Tensor([4.0], requires_grad=True)
    with Tape() as tape:
        nc.sum_(b)
        loss = nc.sum_(a)
    nc.backward(tape, loss, [a, b, unused])
    assert a.grad.tolist() == [1.0, 1.0]
    assert b.grad.tolist() == [0.0]
    assert unused.grad.tolist() == [0.0]


def test_tape_records_only_gradient_paths():
    with Tape() as tape:
        nc.add(Tensor([1.0]), Tensor([2.0]))
        nc.add(Tensor([1.0], requires_grad=True), Tensor([2.0]))
    assert len(tape) == 1
    assert nc.active_tape() is None


def test_finite_difference_check_baselines(rng):
    x = Tensor(rng.normal(size=6))
    assert finite_difference_check(nc.sum_, x) < 1e-10
    assert finite_difference_check(lambda t: nc.sigmoid(nc.sum_(t)), x) < 1e-6


def test_forward_is_deterministic(rng):
    params = gru()
    w, h = Tensor(rng.normal(size=2)), Tensor(rng.normal(size=3))
    assert np.array_equal(nc.gru_cell(w, h, params).data, nc.gru_cell(w, h, params).data)


# --- ParamStore ---

def test_param_store_rejects_duplicates_and_aliases():
    store = ParamStore()
    t = store.create("w", (2, 2))
    with pytest.raises(ContractError):
        store.create("w", (2,))
    with pytest.raises(ContractError):
        store.register("alias", t)


def test_param_store_state_round_trip():
    store = ParamStore(3)
    store.create("w", (2, 3))
    store.create("b", (3,), init="zeros")
    state = store.state_dict()
    store.zero_()
    store.load_state_dict(state)
    np.testing.assert_array_equal(store["w"].data, state["w"])
    with pytest.raises(ContractError):
        store.load_state_dict({"w": state["w"]})
    with pytest.raises(ShapeError):
        store.load_state_dict({"w": np.zeros((3, 2)), "b": state["b"]})


def test_param_store_is_seeded():
    a, b = ParamStore(5).create("w", (3, 3)), ParamStore(5).create("w", (3, 3))
    np.testing.assert_array_equal(a.data, b.data)
