import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from editgauge import autograd as A
from editgauge.errors import NumericalError

from oracles import lstm_cell_by_hand

RNG = np.random.default_rng(1234)


def P(*shape, scale=1.0):
    return A.parameter(RNG.normal(0, scale, size=shape))


def project(t):
    """Scalar readout with a fixed random weight per element."""
    w = np.random.default_rng(99).normal(size=t.shape)
    return A.sum_(A.mul(t, A.Tensor(w)))


def check(f, params, tol=1e-4, n=None):
    err = A.grad_check(lambda: project(f()), params, n_samples=n)
    assert err < tol, err


# --- gradient checks per operation -----------------------------------------------------------

def test_add_with_broadcast():
    a, b = P(3, 4), P(4)
    check(lambda: A.add(a, b), {"a": a, "b": b})


def test_mul_and_sub():
    a, b = P(3, 2), P(3, 2)
    check(lambda: A.mul(a, b) - a, {"a": a, "b": b})


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 2)), ((4,), (4, 3)), ((3, 4), (4,)), ((4,), (4,))])
def test_matmul_shapes(sa, sb):
    a, b = P(*sa), P(*sb)
    check(lambda: A.matmul(a, b), {"a": a, "b": b})


def test_transpose_tanh_sigmoid():
    a = P(3, 5)
    check(lambda: A.sigmoid(A.tanh(A.transpose(a))), {"a": a})


def test_concat_axes():
    a, b = P(2, 3), P(2, 2)
    check(lambda: A.concat([a, b], axis=1), {"a": a, "b": b})
    c, d = P(3), P(4)
    check(lambda: A.concat([c, d]), {"c": c, "d": d})


def test_linear_is_tight():
    x, W, b = P(5), P(5, 3), P(3)
    err = A.grad_check(lambda: A.sum_(A.mul(A.linear(x, W, b) - A.Tensor(np.ones(3)),
                                            A.linear(x, W, b) - A.Tensor(np.ones(3)))),
                       {"x": x, "W": W, "b": b}, n_samples=None)
    assert err < 1e-6


def test_embedding_is_tight():
    E = P(6, 3)
    ids = [0, 2, 2, 5]
    err = A.grad_check(lambda: project(A.embedding(E, ids)), {"E": E}, n_samples=None)
    assert err < 1e-6


def test_softmax_family():
    a = P(6)
    check(lambda: A.log_softmax(a), {"a": a})
    check(lambda: A.softmax(a), {"a": a})
    m = P(3, 4)
    check(lambda: A.log_softmax(m), {"m": m})


def test_pools():
    H = P(5, 3)
    check(lambda: A.max_pool_time(H), {"H": H})
    check(lambda: A.mean_pool_time(H), {"H": H})


def test_lstm_cell_gradients():
    x, h, c, W, b = P(3), P(2), P(2), P(5, 8, scale=0.5), P(8, scale=0.5)
    params = {"x": x, "h": h, "c": c, "W": W, "b": b}
    check(lambda: A.lstm_cell(x, h, c, W, b)[0], params)
    check(lambda: A.lstm_cell(x, h, c, W, b)[1], params)


@pytest.mark.parametrize("reverse", [False, True])
def test_lstm_sequence_gradients(reverse):
    X, W, b, h0, c0 = P(4, 3), P(5, 8, scale=0.5), P(8, scale=0.5), P(2), P(2)
    check(lambda: A.lstm_sequence(X, W, b, h0, c0, reverse=reverse),
          {"X": X, "W": W, "b": b, "h0": h0, "c0": c0}, n=None)


def test_lstm_sequence_matches_cell_loop():
    X, W, b = P(4, 3), P(5, 8), P(8)
    H = A.lstm_sequence(X, W, b).data
    h, c = A.Tensor(np.zeros(2)), A.Tensor(np.zeros(2))
    for t in range(4):
        h, c = A.lstm_cell(A.Tensor(X.data[t]), h, c, W, b)
        np.testing.assert_allclose(H[t], h.data, atol=1e-12)
    Hr = A.lstm_sequence(X, W, b, reverse=True).data
    Hf = A.lstm_sequence(A.Tensor(X.data[::-1]), W, b).data
    np.testing.assert_allclose(Hr, Hf[::-1], atol=1e-12)


def test_losses_gradients():
    z = P(6)
    target = np.random.default_rng(3).dirichlet(np.ones(6))
    assert A.grad_check(lambda: A.kl_div_loss(A.log_softmax(z), target), {"z": z}) < 1e-4
    assert A.grad_check(lambda: A.cross_entropy_loss(A.log_softmax(z), 4), {"z": z}) < 1e-4
    M = P(3, 5)
    assert A.grad_check(lambda: A.nll_loss(A.log_softmax(M), [0, 4, 2]), {"M": M}) < 1e-4


def test_composite_graph_with_reuse():
    a, W = P(3), P(3, 3)
    def f():
        h = A.tanh(A.matmul(a, W))
        return A.mul(h, h) + A.matmul(h, W)
    check(f, {"a": a, "W": W})


# --- forward-value oracles -----------------------------------------------------------------

def test_lstm_cell_zero_weights():
    x = A.Tensor(RNG.normal(size=3))
    h, c = A.lstm_cell(x, A.Tensor(RNG.normal(size=2)), A.Tensor(np.zeros(2)), A.Tensor(np.zeros((5, 8))),
                       A.Tensor(np.zeros(8)))
    assert np.all(h.data == 0) and np.all(c.data == 0)


def test_lstm_cell_hand_set_weights():
    W = np.array([[0.5, -0.3, 0.1, 0.2, 0.3, -0.1, 0.7, 0.4],
                  [0.0, 0.2, -0.4, 0.6, -0.2, 0.1, 0.3, -0.5],
                  [0.1, 0.1, 0.1, 0.1, -0.1, -0.1, -0.1, -0.1],
                  [0.9, -0.9, 0.2, -0.2, 0.4, -0.4, 0.0, 0.3]])
    b = np.array([0.0, 0.1, 1.0, 1.0, 0.0, -0.2, 0.0, 0.2])
    x, h, c = [1.0, -2.0], [0.5, 0.25], [0.3, -0.7]
    h2, c2 = A.lstm_cell(A.Tensor(x), A.Tensor(h), A.Tensor(c), A.Tensor(W), A.Tensor(b))
    eh, ec = lstm_cell_by_hand(x, h, c, W.tolist(), b.tolist())
    np.testing.assert_allclose(h2.data, eh, atol=1e-6)
    np.testing.assert_allclose(c2.data, ec, atol=1e-6)


def test_lstm_dimension_mismatch():
    with pytest.raises(ValueError):
        A.lstm_cell(A.Tensor(np.zeros(3)), A.Tensor(np.zeros(2)), A.Tensor(np.zeros(2)),
                    A.Tensor(np.zeros((4, 8))), A.Tensor(np.zeros(8)))
    with pytest.raises(ValueError):
        A.lstm_sequence(A.Tensor(np.zeros((2, 3))), A.Tensor(np.zeros((5, 7))), A.Tensor(np.zeros(7)))


def test_kl_examples():
    z = A.Tensor(RNG.normal(size=6))
    p = A.softmax(z).data
    assert abs(A.kl_div_loss(A.log_softmax(z), p).item()) < 1e-9
    half = A.Tensor(np.log([0.5, 0.5]))
    assert A.kl_div_loss(half, [1.0, 0.0]).item() == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        A.kl_div_loss(half, [1.0, 0.0, 0.0])


def test_ce_examples():
    assert A.cross_entropy_loss(A.Tensor(np.array([0.0, -np.inf])), 0).item() == 0.0
    assert A.cross_entropy_loss(A.Tensor(np.log(np.full(6, 1 / 6))), 2).item() == pytest.approx(math.log(6), abs=1e-6)
    with pytest.raises(IndexError):
        A.cross_entropy_loss(A.Tensor(np.zeros(3)), 3)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=8), st.integers(0, 7))
def test_ce_equals_kl_on_one_hot(logits, k):
    k %= len(logits)
    lp = A.log_softmax(A.Tensor(np.array(logits)))
    onehot = np.eye(len(logits))[k]
    assert A.cross_entropy_loss(lp, k).item() == pytest.approx(A.kl_div_loss(lp, onehot).item(), abs=1e-9)


def test_max_pool_examples():
    assert A.max_pool_time(A.Tensor(np.array([[1.0, 5.0], [3.0, 2.0]]))).data.tolist() == [3.0, 5.0]
    row = np.array([1.0, -2.0, 3.0])
    assert A.max_pool_time(A.Tensor(np.stack([row] * 4))).data.tolist() == row.tolist()
    with pytest.raises(ValueError):
        A.max_pool_time(A.Tensor(np.zeros((0, 3))))


def test_max_pool_ties_route_to_first():
    H = A.parameter(np.array([[1.0, 0.0], [1.0, 2.0]]))
    A.sum_(A.max_pool_time(H)).backward()
    assert H.grad.tolist() == [[1.0, 0.0], [0.0, 1.0]]


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-100, 100))
def test_softmax_properties(logits, shift):
    z = np.array(logits)
    assert A.softmax(A.Tensor(z)).data.sum() == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(A.log_softmax(A.Tensor(z + shift)).data, A.log_softmax(A.Tensor(z)).data, atol=1e-9)


@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_lstm_is_finite_for_large_inputs(T, d_in, d_h, seed):
    rng = np.random.default_rng(seed)
    X = A.Tensor(rng.normal(0, 1e3, size=(T, d_in)))
    W = A.Tensor(rng.normal(0, 10, size=(d_in + d_h, 4 * d_h)))
    assert np.all(np.isfinite(A.lstm_sequence(X, W, A.Tensor(np.zeros(4 * d_h))).data))


# --- grad_check conventions -------------------------------------------------------------------

def test_relative_error_convention():
    assert A.relative_error(0.0, 1e-13) == 0.0
    assert A.relative_error(1.0, 1.0) == 0.0
    assert A.relative_error(1.0, 0.5) == 0.5


def test_grad_check_constant_function():
    p = P(3)
    assert A.grad_check(lambda: A.Tensor(np.array(2.0)) + A.mul(p, A.Tensor(np.zeros(3))).data.sum(), {"p": p}) == 0.0


def test_grad_check_detects_wrong_gradient():
    p = P(4)

    def broken():
        out = A.sum_(A.mul(p, p))
        return A._node(out.data, (p,), lambda g: p._accumulate(g * p.data))  # should be 2p

    assert A.grad_check(broken, {"p": p}) > 0.1


# --- optimizer -------------------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    new, state = A.adam_step(params, {"w": np.zeros(2)}, {})
    np.testing.assert_array_equal(new["w"], params["w"])
    assert state["t"] == 1


def test_adam_first_step():
    new, _ = A.adam_step({"w": np.array(3.0)}, {"w": np.array(1.0)}, {}, lr=0.1)
    assert 3.0 - new["w"] == pytest.approx(0.1, abs=1e-7)


def test_adam_rejects_non_finite():
    with pytest.raises(NumericalError, match="'bad'"):
        A.adam_step({"bad": np.zeros(1)}, {"bad": np.array([np.nan])}, {})


def test_adam_deterministic_and_clipped():
    def run():
        rng = np.random.default_rng(5)
        W = A.parameter(rng.normal(size=(3, 2)))
        opt = A.Adam({"W": W}, lr=0.05, clip_norm=1.0)
        norms = []
        for _ in range(10):
            opt.zero_grad()
            x = A.Tensor(rng.normal(size=3) * 100)
            A.sum_(A.matmul(x, W)).backward()
            norms.append(opt.step())
        return W.data.copy(), norms

    (w1, n1), (w2, n2) = run(), run()
    np.testing.assert_array_equal(w1, w2)
    assert max(n1) > 1.0  # clipping was exercised


def test_clip_grad_norm():
    grads, norm = A.clip_grad_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
    assert norm == 5.0
    assert math.hypot(grads["a"][0], grads["b"][0]) == pytest.approx(1.0)


def test_init_ranges_and_seeding():
    W = A.init_matrix(np.random.default_rng(0), 16, 4)
    assert np.abs(W.data).max() <= 0.25
    E = A.init_embedding(np.random.default_rng(0), 10, 3)
    assert np.abs(E.data).max() <= 0.1
    np.testing.assert_array_equal(W.data, A.init_matrix(np.random.default_rng(0), 16, 4).data)


def test_checkpoint_container(tmp_path):
    arrays = {"W": RNG.normal(size=(2, 3)), "b": np.zeros(3)}
    A.save_arrays(tmp_path / "c.npz", arrays, {"hello": [1, 2]})
    back, meta = A.load_arrays(tmp_path / "c.npz")
    assert meta["hello"] == [1, 2] and meta["format"] == A.CHECKPOINT_FORMAT
    np.testing.assert_array_equal(back["W"], arrays["W"])


def test_grad_check_absolute_floor():
    p = A.parameter(np.array([1.0, 2.0]))

    def biased():
        out = A.sum_(A.mul(p, p))
        return A._node(out.data, (p,), lambda g: p._accumulate(g * (2 * p.data + 1e-7)))

    assert A.grad_check(biased, {"p": p}) > 1e-8
    assert A.grad_check(biased, {"p": p}, atol=1e-6) == 0.0
    assert A.grad_check(biased, {"p": p}, atol=1e-9) > 1e-8
