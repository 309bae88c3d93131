"""Autodiff core: value contracts, finite-difference checks, tape invariants."""

import numpy as np
import pytest

from qcforecast.errors import ShapeError, SingularMatrixError
from qcforecast.numerics import (
    Tape,
    add,
    assemble_lower_tri,
    broadcast_to,
    clip_min,
    concat_last,
    div,
    exp,
    grad_check,
    log,
    log_det_lower_tri,
    lower_tri_solve,
    matmul,
    mul,
    normal_cdf,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    slice_last,
    sqrt,
    sub,
    tanh,
    tri_diagonal,
)


def random_lower(rng, d):
    """Well-conditioned lower-triangular test matrix."""
    L = np.tril(rng.uniform(-1.0, 1.0, (d, d)))
    L[np.diag_indices(d)] = rng.uniform(1.0, 2.0, d)
    return L


# ---------------------------------------------------------------------------
# triangular solve and log-det values


def test_solve_identity():
    b = np.array([1.0, -2.0, 0.5])
    z = lower_tri_solve(np.eye(3), b)
    assert np.allclose(z, b, atol=0, rtol=0)


def test_solve_two_by_two_hand_case():
    L = np.array([[2.0, 0.0], [1.0, 1.0]])
    z = lower_tri_solve(L, np.array([2.0, 3.0]))
    assert np.allclose(z, [1.0, 2.0], atol=1e-15)


def test_solve_residual_oracle():
    rng = np.random.default_rng(0)
    for trial in range(100):
        d = 1 + trial % 8
        L = random_lower(rng, d)
        b = rng.uniform(-3.0, 3.0, d)
        z = lower_tri_solve(L, b)
        residual = np.max(np.abs(L @ z - b))
        assert residual < 1e-10 * max(1.0, np.max(np.abs(b)))


def test_solve_singular_diagonal_raises():
    L = np.array([[1.0, 0.0], [0.5, 1e-13]])
    with pytest.raises(SingularMatrixError):
        lower_tri_solve(L, np.array([1.0, 1.0]))


def test_solve_rejects_upper_entries():
    L = np.array([[1.0, 0.3], [0.0, 1.0]])
    with pytest.raises(ShapeError):
        lower_tri_solve(L, np.array([1.0, 1.0]))


def test_log_det_identity_and_diag():
    assert log_det_lower_tri(np.eye(5)) == 0.0
    L = np.diag([2.0, 2.0])
    assert abs(log_det_lower_tri(L) - 2.0 * np.log(2.0)) < 1e-14


def test_log_det_product_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = rng.integers(1, 9)
        L = random_lower(rng, d)
        want = np.log(np.prod(np.diag(L)))
        assert abs(log_det_lower_tri(L) - want) < 1e-12


def test_log_det_rejects_nonpositive_diag():
    L = np.array([[1.0, 0.0], [0.3, -0.5]])
    with pytest.raises(ValueError):
        log_det_lower_tri(L)


# ---------------------------------------------------------------------------
# gradient checks


def test_grad_check_quadratic():
    err = grad_check(lambda t: reduce_sum(mul(t, t)), np.array([3.0]), eps=1e-5)
    assert err < 1e-6


def test_grad_check_every_primitive():
    rng = np.random.default_rng(2)
    cases = [
        lambda t: reduce_sum(add(mul(t, 2.0), 0.5)),
        lambda t: reduce_sum(sub(t, mul(t, t))),
        lambda t: reduce_sum(div(t, add(mul(t, t), 1.5))),
        lambda t: reduce_sum(tanh(t)),
        lambda t: reduce_sum(exp(mul(t, 0.3))),
        lambda t: reduce_sum(log(add(mul(t, t), 1.0))),
        lambda t: reduce_sum(sqrt(add(mul(t, t), 0.7))),
        lambda t: reduce_mean(normal_cdf(t)),
        lambda t: reduce_sum(mul(relu(t), t)),
        lambda t: reduce_sum(clip_min(t, 0.1)),
        lambda t: reduce_sum(slice_last(reshape(t, (2, 5)), 1, 4)),
        lambda t: reduce_sum(mul(broadcast_to(reshape(t, (1, 10)), (4, 10)), 0.25)),
        lambda t: reduce_sum(concat_last([reshape(t, (2, 5)), mul(reshape(t, (2, 5)), 2.0)])),
    ]
    for point in range(10):
        theta = rng.uniform(0.5, 1.5, 10)  # away from relu/clip kinks
        for fn in cases:
            assert grad_check(fn, theta, eps=1e-5) < 1e-4


def test_grad_check_matmul():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(4, 3))

    def f(t):
        W = reshape(t, (3, 2))
        return reduce_sum(mul(matmul(X, W), matmul(X, W)))

    assert grad_check(f, rng.normal(size=6), eps=1e-5) < 1e-4


def test_grad_check_cdf_of_correlated_scores():
    # composed graph: sum(Phi(L z)) differentiated w.r.t. both L and z
    rng = np.random.default_rng(4)
    d = 4
    Lmask = np.tril(np.ones((d, d)))

    def f(t):
        flat = reshape(t, (d + 1, d))
        L = mul(slice_last(reshape(flat, (1, (d + 1) * d)), 0, d * d), 1.0)
        L = reshape(L, (d, d))
        L = add(mul(L, Lmask), np.eye(d) * 1.5)  # keep diagonal well away from 0
        z = reshape(slice_last(reshape(flat, (1, (d + 1) * d)), d * d, (d + 1) * d), (d,))
        zs = lower_tri_solve(L, z, validate=False)
        return reduce_sum(normal_cdf(zs))

    theta = rng.uniform(0.2, 0.8, (d + 1) * d)
    assert grad_check(f, theta, eps=1e-5) < 1e-4


def test_grad_check_copula_negative_log_likelihood():
    rng = np.random.default_rng(5)
    d = 4
    m = d * (d - 1) // 2
    target = rng.normal(size=d)

    def f(t):
        diag = add(slice_last(t, 0, d), 2.0)  # clipped region avoided
        off = tanh(slice_last(t, d, d + m))
        L = assemble_lower_tri(diag, off)
        norms = sqrt(reduce_sum(mul(L, L), axis=-1, keepdims=True))
        Ln = div(L, norms)
        white = lower_tri_solve(Ln, target, validate=False)
        return add(mul(log_det_lower_tri(Ln, validate=False), 2.0),
                   reduce_sum(mul(white, white)))

    theta = rng.uniform(-0.5, 0.5, d + m)
    assert grad_check(f, theta, eps=1e-5) < 1e-4


def test_grad_check_solve_wrt_rhs_and_matrix():
    rng = np.random.default_rng(6)
    d = 6
    L0 = random_lower(rng, d)

    def f_rhs(t):
        z = lower_tri_solve(L0, t)
        return reduce_sum(mul(z, z))

    assert grad_check(f_rhs, rng.normal(size=d), eps=1e-5) < 1e-4

    b0 = rng.normal(size=d)
    mask = np.tril(np.ones((d, d)))

    def f_mat(t):
        L = add(mul(reshape(t, (d, d)), mask), np.eye(d) * 2.0)
        z = lower_tri_solve(L, b0, validate=False)
        return reduce_sum(mul(z, z))

    assert grad_check(f_mat, rng.uniform(-0.4, 0.4, d * d), eps=1e-5) < 1e-4


# ---------------------------------------------------------------------------
# tape mechanics


def test_backward_visits_reverse_order():
    order = []
    tape = Tape()
    x = tape.var(np.array([1.0]))

    def spy(tag, t):
        def backward():
            order.append(tag)
        tape._record(backward)
        return t

    a = spy("a", add(x, 1.0))
    b = spy("b", mul(a, 2.0))
    loss = reduce_sum(b)
    tape.backward(loss)
    assert order == ["b", "a"]


def test_unused_nodes_have_zero_grad():
    tape = Tape()
    x = tape.var(np.array([2.0]))
    y = tape.var(np.array([5.0]))
    unused = mul(y, 3.0)
    loss = reduce_sum(mul(x, x))
    tape.backward(loss)
    assert np.allclose(x.grad_value, [4.0])
    assert np.allclose(y.grad_value, [0.0])
    assert np.allclose(unused.grad_value, [0.0])


def test_mixing_tapes_rejected():
    t1, t2 = Tape(), Tape()
    a = t1.var(np.array([1.0]))
    b = t2.var(np.array([1.0]))
    with pytest.raises(ValueError):
        add(a, b)


def test_untaped_inputs_compute_plain_numpy():
    out = tanh(np.array([0.5, -0.5]))
    assert isinstance(out, np.ndarray)


def test_batched_solve_matches_loop():
    rng = np.random.default_rng(7)
    d, B = 5, 9
    Ls = np.stack([random_lower(rng, d) for _ in range(B)])
    bs = rng.normal(size=(B, d))
    zs = lower_tri_solve(Ls, bs)
    for i in range(B):
        assert np.allclose(zs[i], np.linalg.solve(Ls[i], bs[i]), atol=1e-12)
