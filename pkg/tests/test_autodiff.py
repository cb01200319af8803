import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demandgraph import autodiff as ad


def test_relu_forward_backward():
    x = ad.Parameter([-1.0, 0.0, 2.0])
    y = ad.relu(x)
    assert y.value.tolist() == [0.0, 0.0, 2.0]
    ad.mse(y, np.zeros(3)).backward()
    # upstream gradient 2*y/3 passes only where x > 0
    assert x.grad.tolist() == [0.0, 0.0, 4.0 / 3.0]


def test_mse_example():
    p = ad.Parameter([1.0, 2.0])
    loss = ad.mse(p, [0.0, 2.0])
    assert loss.value == 0.5
    loss.backward()
    assert p.grad.tolist() == [1.0, 0.0]


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(np.ones((2, 3)), np.ones((4, 5)))
    with pytest.raises(ad.ShapeError):
        ad.mse(np.ones(3), np.ones(2))


def test_dropout_eval_identity_and_bad_p(rng):
    x = ad.Tensor(rng.normal(size=(4, 3)))
    assert ad.dropout(x, 0.9, training=False) is x
    with pytest.raises(ValueError):
        ad.dropout(x, 1.0, True, rng)


def test_dropout_seeded_and_unbiased():
    x = np.linspace(-1, 1, 10)
    a = ad.dropout(x, 0.5, True, np.random.default_rng(3)).value
    b = ad.dropout(x, 0.5, True, np.random.default_rng(3)).value
    assert np.array_equal(a, b)
    masks = ad.dropout_mask((100_000, 10), 0.5, np.random.default_rng(4))
    mean = (masks * x).mean(0)
    np.testing.assert_allclose(mean, x, atol=0.02 * np.abs(x).max())


def test_dropout_per_example_generators():
    gens = lambda: [np.random.default_rng([1, k]) for k in range(3)]  # noqa: E731
    m = ad.dropout_mask((3, 4, 5), 0.5, gens())
    assert np.array_equal(m[1], ad.dropout_mask((1, 4, 5), 0.5, [gens()[1]])[0])
    with pytest.raises(ad.ShapeError):
        ad.dropout_mask((3, 4), 0.5, gens()[:2])


def test_grad_check_quadratic(rng):
    theta = ad.Parameter(rng.normal(size=(3, 4)))
    half_sq = lambda: ad.mse(theta, np.zeros((3, 4)))  # noqa: E731  mean of squares
    assert ad.grad_check(half_sq, [theta]) < 1e-10


def test_grad_check_rejects_non_finite():
    p = ad.Parameter([np.inf])
    with pytest.raises(FloatingPointError):
        ad.grad_check(lambda: ad.mse(p, [0.0]), [p])


def test_no_grad_builds_no_graph(rng):
    w = ad.Parameter(rng.normal(size=(3, 2)))
    with ad.no_grad():
        y = ad.matmul(rng.normal(size=(4, 3)), w)
    assert not y.requires_grad and y._parents == ()


def test_backward_needs_scalar():
    with pytest.raises(ad.ShapeError):
        ad.Parameter(np.ones(2)).backward()


# --------------------------------------------------------------- softmax


def test_masked_softmax_rows_and_shift(rng):
    logits = rng.uniform(-2, 2, size=(5, 5))
    mask = rng.random((5, 5)) < 0.5
    np.fill_diagonal(mask, True)
    y = ad.masked_row_softmax(logits, mask).value
    np.testing.assert_allclose(y.sum(1), 1.0, atol=1e-15)
    assert not y[~mask].any()
    shifted = logits + rng.normal(size=(5, 1)) * 10
    np.testing.assert_allclose(ad.masked_row_softmax(shifted, mask).value, y, atol=1e-14)


def test_masked_softmax_empty_row():
    with pytest.raises(ad.ShapeError):
        ad.masked_row_softmax(np.zeros((2, 2)), [[True, False], [False, False]])


def test_edge_list_matches_dense(rng):
    B, H, N, F = 2, 3, 6, 4
    mask = rng.random((N, N)) < 0.4
    np.fill_diagonal(mask, True)
    dst, src = np.nonzero(mask)
    z = rng.normal(size=(B, H, N, F))
    att = rng.normal(size=(H, 2 * F))
    dense = ad.masked_row_softmax(ad.leaky_relu(ad.pair_logits(z, att), 0.2), mask).value
    edge = ad.segment_softmax(ad.leaky_relu(ad.edge_logits(z, att, dst, src), 0.2), dst, N).value
    np.testing.assert_allclose(edge, dense[..., dst, src], atol=1e-14)
    agg = ad.edge_aggregate(edge, z, dst, src).value
    np.testing.assert_allclose(agg, dense @ z, atol=1e-13)


def test_segment_softmax_underflow_fallback():
    logits = np.array([[0.0, -2000.0, -2001.0]])
    y = ad.segment_softmax(logits, np.array([0, 1, 1]), 2).value
    np.testing.assert_allclose(y, [[1.0, 1 / (1 + np.exp(-1)), np.exp(-1) / (1 + np.exp(-1))]])


# ------------------------------------------------------ gradient property

PRIMITIVES = ("matmul", "add", "add_row_bias", "relu", "leaky_relu", "masked_row_softmax",
              "dropout", "pair_logits", "edge_logits", "segment_softmax", "edge_aggregate",
              "reshape", "swapaxes")


def _case(name, rng, n, f):
    u = lambda *s: rng.uniform(-2, 2, size=s)  # noqa: E731
    mask = rng.random((n, n)) < 0.5
    np.fill_diagonal(mask, True)
    dst, src = np.nonzero(mask)
    if name == "matmul":
        a, b = ad.Parameter(u(2, n, f)), ad.Parameter(u(f, 3))
        return lambda: ad.matmul(a, b), [a, b]
    if name == "add":
        a, b = ad.Parameter(u(n, f)), ad.Parameter(u(1, f))
        return lambda: ad.add(a, b), [a, b]
    if name == "add_row_bias":
        a, b = ad.Parameter(u(2, n, f)), ad.Parameter(u(f))
        return lambda: ad.add_row_bias(a, b), [a, b]
    if name in ("relu", "leaky_relu"):
        x = ad.Parameter(u(n, f))
        fn = ad.relu if name == "relu" else (lambda t: ad.leaky_relu(t, 0.2))
        return lambda: fn(x), [x]
    if name == "masked_row_softmax":
        x = ad.Parameter(u(2, n, n))
        return lambda: ad.masked_row_softmax(x, mask), [x]
    if name == "dropout":
        x = ad.Parameter(u(n, f))
        seed = int(rng.integers(1 << 30))
        return lambda: ad.dropout(x, 0.5, True, np.random.default_rng(seed)), [x]
    if name in ("pair_logits", "edge_logits"):
        z, att = ad.Parameter(u(2, 3, n, f)), ad.Parameter(u(3, 2 * f))
        if name == "pair_logits":
            return lambda: ad.pair_logits(z, att), [z, att]
        return lambda: ad.edge_logits(z, att, dst, src), [z, att]
    if name == "segment_softmax":
        x = ad.Parameter(u(2, 3, len(dst)))
        return lambda: ad.segment_softmax(x, dst, n), [x]
    if name == "edge_aggregate":
        a, z = ad.Parameter(u(2, 3, len(dst))), ad.Parameter(u(2, 3, n, f))
        return lambda: ad.edge_aggregate(a, z, dst, src), [a, z]
    if name == "reshape":
        x = ad.Parameter(u(n, f, 2))
        return lambda: ad.reshape(x, (2 * n, f)), [x]
    x = ad.Parameter(u(n, f, 2))
    return lambda: ad.swapaxes(x, 0, 2), [x]


@settings(max_examples=130, deadline=None)
@given(st.sampled_from(PRIMITIVES), st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 4))
def test_primitive_gradients(name, seed, n, f):
    rng = np.random.default_rng(seed)
    op, params = _case(name, rng, n, f)
    target = rng.uniform(-2, 2, size=op().shape)
    assert ad.grad_check(lambda: ad.mse(op(), target), params) < 1e-6


def test_activations_propagate_nan():
    x = np.array([np.nan, -1.0, 1.0])
    assert np.isnan(ad.relu(x).value[0])
    assert np.isnan(ad.leaky_relu(x).value[0])
