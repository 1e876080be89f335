import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motiongraph.errors import DimensionError, StateError
from motiongraph.numerics import (
    OptimizerState,
    Parameter,
    Tape,
    Tensor,
    adamw_step,
    backward,
    conv2d,
    cosine_lr,
    cosine_similarity_rows,
    leaky_relu,
    matmul,
    ops,
    pixel_shuffle,
    pixel_unshuffle,
    topk_desc,
    topk_rows,
)
from motiongraph.numerics import mgt
from motiongraph.numerics.branches import recording, replaying
from motiongraph.numerics.gradcheck import check_function
from motiongraph.pipeline.gradsuite import OPS, run_op_suite


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# -- oracles --------------------------------------------------------------------

def matmul_oracle(a, b):
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            c[i, j] = acc
    return c


def conv_oracle(x, w, b, stride, pad):
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for yo in range(Ho):
                for xo in range(Wo):
                    acc = b[o]
                    for c in range(C):
                        for i in range(kh):
                            for j in range(kw):
                                yi = yo * stride + i - pad
                                xi = xo * stride + j - pad
                                if 0 <= yi < H and 0 <= xi < W:
                                    acc += x[n, c, yi, xi] * w[o, c, i, j]
                    out[n, o, yo, xo] = acc
    return out


def cosine_oracle(a, b, eps=1e-8):
    out = np.zeros((len(a), len(b)))
    for i, u in enumerate(a):
        for j, v in enumerate(b):
            dot = sum(float(p) * float(q) for p, q in zip(u, v))
            nu = math.sqrt(sum(float(p) ** 2 for p in u))
            nv = math.sqrt(sum(float(q) ** 2 for q in v))
            out[i, j] = dot / (max(nu, eps) * max(nv, eps))
    return out


def sort_oracle(scores, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


# -- tensor basics ---------------------------------------------------------------

def test_tensor_invariants():
    t = Tensor(np.arange(6.0).reshape(2, 3))
    assert t.shape == (2, 3) and t.dtype == np.float64
    assert t.data.flags.c_contiguous
    assert Tensor(3.0).shape == (1,)
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0, 3)))
    with pytest.raises(TypeError):
        Tensor([1, 2], dtype=np.int32)


def test_constructor_does_not_freeze_caller_buffer():
    a = np.ones(3)
    Tensor(a)
    a[0] = 5.0
    assert a[0] == 5.0


# -- matmul ------------------------------------------------------------------------

def test_matmul_identity():
    out = matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
    np.testing.assert_array_equal(out.data, [[5, 6], [7, 8]])


def test_matmul_hand_value():
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_triple_loop(rng):
    a = rng.integers(-9, 10, size=(4, 5)).astype(np.float64)
    b = rng.integers(-9, 10, size=(5, 3)).astype(np.float64)
    np.testing.assert_array_equal(matmul(Tensor(a), Tensor(b)).data, matmul_oracle(a, b))
    a = rng.standard_normal((4, 5))
    b = rng.standard_normal((5, 3))
    np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, matmul_oracle(a, b),
                               rtol=1e-14, atol=1e-14)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# -- conv2d --------------------------------------------------------------------------

def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 1, 3, 3))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.data, x)


def test_conv_ones_counts_taps():
    out = conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), padding=1).data[0, 0]
    expected = np.array([[4, 6, 6, 4], [6, 9, 9, 6], [6, 9, 9, 6], [4, 6, 6, 4]], dtype=float)
    np.testing.assert_array_equal(out, expected)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_matches_naive_loops(rng, stride, pad):
    x = rng.integers(-4, 5, size=(2, 3, 7, 6)).astype(np.float64)
    w = rng.integers(-3, 4, size=(4, 3, 3, 3)).astype(np.float64)
    b = rng.integers(-2, 3, size=4).astype(np.float64)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad).data
    np.testing.assert_array_equal(out, conv_oracle(x, w, b, stride, pad))
    # 1×3 kernel and floating inputs
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((2, 2, 1, 3))
    b = rng.standard_normal(2)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad).data
    np.testing.assert_allclose(out, conv_oracle(x, w, b, stride, pad), rtol=1e-13, atol=1e-13)


def test_conv_errors():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 5, 5))), padding=1)
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))))
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 1, 3, 3))))


# -- leaky relu ------------------------------------------------------------------

def test_leaky_relu_values():
    np.testing.assert_allclose(leaky_relu(Tensor([-1.0, 0.0, 2.0]), 0.2).data, [-0.2, 0.0, 2.0])
    x = np.array([0.0, 0.5, 3.0])
    np.testing.assert_array_equal(leaky_relu(Tensor(x), 0.2).data, x)
    with pytest.raises(ValueError):
        leaky_relu(Tensor([1.0]), 1.5)


def test_leaky_relu_gradient_in_negative_branch():
    x = Tensor([-3.0], requires_grad=True)
    with Tape():
        backward(leaky_relu(x, 0.2).sum())
    h = 1e-6
    up = leaky_relu(Tensor([-3.0 + h]), 0.2).item()
    down = leaky_relu(Tensor([-3.0 - h]), 0.2).item()
    fd = (up - down) / (2 * h)
    assert x.grad[0] == pytest.approx(0.2, abs=1e-15)
    assert fd == pytest.approx(0.2, rel=1e-8)


# -- pixel shuffle ---------------------------------------------------------------

def test_unshuffle_unit_factor(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    np.testing.assert_array_equal(pixel_unshuffle(Tensor(x), 1).data, x)
    np.testing.assert_array_equal(pixel_shuffle(Tensor(x), 1).data, x)


def test_unshuffle_channel_order():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = pixel_unshuffle(Tensor(x), 2).data
    assert out.shape == (1, 4, 1, 1)
    assert out.reshape(-1).tolist() == [1.0, 2.0, 3.0, 4.0]
    back = pixel_shuffle(Tensor(out), 2).data
    np.testing.assert_array_equal(back, x)


@pytest.mark.parametrize("r", [1, 2, 4])
def test_shuffle_round_trip(rng, r):
    x = rng.standard_normal((2, 3, 4 * r, 2 * r))
    np.testing.assert_array_equal(pixel_shuffle(pixel_unshuffle(Tensor(x), r), r).data, x)
    y = rng.standard_normal((1, 3 * r * r, 3, 5))
    np.testing.assert_array_equal(pixel_unshuffle(pixel_shuffle(Tensor(y), r), r).data, y)


def test_shuffle_errors():
    with pytest.raises(DimensionError):
        pixel_unshuffle(Tensor(np.ones((1, 1, 3, 4))), 2)
    with pytest.raises(DimensionError):
        pixel_shuffle(Tensor(np.ones((1, 3, 2, 2))), 2)


# -- cosine similarity ---------------------------------------------------------------

def test_cosine_self_and_orthogonal():
    a = Tensor([[1.0, 2.0, 3.0]])
    assert cosine_similarity_rows(a, a).item() == pytest.approx(1.0, abs=1e-15)
    s = cosine_similarity_rows(Tensor([[1.0, 0.0]]), Tensor([[0.0, 4.0]]))
    assert s.item() == 0.0


def test_cosine_matches_scalar_oracle(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((5, 4))
    b[2] = 0.0
    np.testing.assert_allclose(cosine_similarity_rows(Tensor(a), Tensor(b)).data,
                               cosine_oracle(a, b), rtol=1e-14, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_cosine_bounded_and_symmetric(n, m, c, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, c)) * rng.choice([1e-9, 1.0, 1e6])
    b = rng.standard_normal((m, c))
    s = cosine_similarity_rows(Tensor(a), Tensor(b)).data
    assert np.all(np.abs(s) <= 1 + 1e-6)
    sa = cosine_similarity_rows(Tensor(a), Tensor(a)).data
    np.testing.assert_allclose(sa, sa.T, atol=1e-15)


# -- top-k ---------------------------------------------------------------------------

def test_topk_examples():
    assert topk_desc([0.1, 0.9, 0.5], 2) == [(1, 0.9), (2, 0.5)]
    assert [i for i, _ in topk_desc([0.3] * 5, 3)] == [0, 1, 2]
    with pytest.raises(ValueError):
        topk_desc([0.1, 0.2], 3)


def test_topk_vs_sort_oracle(rng):
    scores = rng.standard_normal(64)
    assert [i for i, _ in topk_desc(scores, 8)] == sort_oracle(list(scores), 8)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=30), st.data())
def test_topk_equals_stable_sort_prefix(values, data):
    k = data.draw(st.integers(1, len(values)))
    scores = [v / 2 for v in values]
    assert [i for i, _ in topk_desc(scores, k)] == sort_oracle(scores, k)


def test_topk_rows_with_exclusion(rng):
    s = rng.integers(0, 3, size=(6, 6)).astype(float)
    got = topk_rows(s, 3, exclude=np.arange(6))
    for i in range(6):
        row = [(-s[i, j], j) for j in range(6) if j != i]
        assert got[i].tolist() == [j for _, j in sorted(row)[:3]]


# -- tape / backward ---------------------------------------------------------------

def test_backward_linear_and_quadratic():
    p = Parameter([1.0, -2.0], name="p")
    with Tape():
        backward(p.sum())
    np.testing.assert_array_equal(p.grad, [1.0, 1.0])
    p.zero_grad()
    with Tape():
        backward((p * p).sum())
    np.testing.assert_array_equal(p.grad, [2.0, -4.0])


def test_backward_accumulates_and_clears_tape():
    p = Parameter([3.0], name="p")
    with Tape() as tape:
        loss = (p * 2.0).sum()
        assert len(tape) == 2
        backward(loss)
        assert len(tape) == 0
    with Tape():
        backward((p * 2.0).sum())
    assert p.grad[0] == 4.0


def test_backward_requires_tape():
    p = Parameter([1.0], name="p")
    with pytest.raises(StateError):
        backward(p.sum())
    with Tape():
        loss = p.sum()
        backward(loss)
        with pytest.raises(StateError):
            backward(loss)


def test_backward_visits_each_recorded_op_once(rng):
    p = Parameter(rng.standard_normal((3, 3)), name="p")
    trace = []
    with Tape() as tape:
        h = ops.tanh(p @ p) + p
        loss = (h * h).mean()
        recorded = [op.name for op in tape.ops]
        # topological order: each op's inputs come from earlier ops or leaves
        for j, op in enumerate(tape.ops):
            for inp in op.inputs:
                assert inp._index < j
        backward(loss, trace=trace)
    assert trace == list(reversed(recorded))


# -- finite differences for every primitive ------------------------------------------

@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-6), (np.float32, 1e-3)])
@pytest.mark.parametrize("op", OPS)
def test_op_matches_finite_differences(op, dtype, tol):
    err = run_op_suite(dtype, seed=11, only=op)[op]
    assert err < tol, f"{op}: rel err {err:.2e}"


def test_checker_flags_a_wrong_gradient():
    def bad_square(a):
        # forward a*a, backward claims 3a
        return ops._record("bad_square", a.data * a.data, (a,), lambda g: (3.0 * g * a.data,))
    err = check_function(bad_square, [np.array([0.7, -1.3, 2.0])], rng=np.random.default_rng(0))
    assert err > 0.1


def test_branch_replay_keeps_the_recorded_piece():
    x = Tensor(np.array([-0.5, 0.5]))
    with recording() as log:
        leaky_relu(x, 0.2)
    with replaying(log):
        out = leaky_relu(Tensor(np.array([0.5, -0.5])), 0.2)
    np.testing.assert_allclose(out.data, [0.1, -0.5])


def test_branch_replay_detects_a_different_program():
    with recording() as log:
        leaky_relu(Tensor(np.zeros(3)), 0.2)
    with pytest.raises(StateError):
        with replaying(log):
            leaky_relu(Tensor(np.zeros(4)), 0.2)


# -- optimizer ------------------------------------------------------------------------

def test_adamw_zero_gradient_is_noop():
    p = Parameter(np.array([0.3, -1.2]), name="p")
    state = OptimizerState(total_steps=10, weight_decay=0.0)
    for _ in range(3):
        adamw_step([p], state)
    np.testing.assert_array_equal(p.data, [0.3, -1.2])


def test_adamw_single_step_hand_value():
    p = Parameter(np.array([0.5]), name="p")
    p.grad[:] = 0.2
    state = OptimizerState(total_steps=100)
    lr = adamw_step([p], state)
    assert lr == 1e-3
    m_hat = (0.1 * 0.2) / 0.1
    v_hat = (0.001 * 0.04) / 0.001
    expected = 0.5 * (1 - 1e-3 * 1e-2) - 1e-3 * m_hat / (math.sqrt(v_hat) + 1e-8)
    assert p.data[0] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_array_equal(p.grad, [0.2])


def test_cosine_schedule_points():
    assert cosine_lr(0, 100) == pytest.approx(1e-3, abs=1e-18)
    assert cosine_lr(100, 100) == pytest.approx(1e-5, abs=1e-18)
    assert cosine_lr(50, 100) == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)
    assert cosine_lr(500, 100) == cosine_lr(100, 100)
    lrs = [cosine_lr(s, 37) for s in range(50)]
    assert all(a >= b for a, b in itertools.pairwise(lrs))


# -- tensor file format --------------------------------------------------------------

@pytest.mark.parametrize("dtype,code", [(np.float32, 1), (np.float64, 2)])
def test_mgt_round_trip_and_header(rng, tmp_path, dtype, code):
    x = rng.standard_normal((2, 3, 4)).astype(dtype)
    blob = mgt.encode(x)
    assert blob[:4] == b"MGT1" and blob[4] == code and blob[5] == 3 and blob[6:8] == b"\0\0"
    assert int.from_bytes(blob[8:16], "little") == 2
    assert len(blob) == 8 + 3 * 8 + x.nbytes
    path = tmp_path / "x.mgt"
    mgt.save(path, x)
    y = mgt.load(path)
    assert y.dtype == dtype
    np.testing.assert_array_equal(x, y)


def test_mgt_rejects_garbage():
    from motiongraph.errors import InputError
    with pytest.raises(InputError):
        mgt.decode(b"NOPE0000")
    with pytest.raises(InputError):
        mgt.decode(mgt.encode(np.ones(3))[:-1])
