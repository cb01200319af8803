import numpy as np
import pytest

from demandgraph.autodiff import Parameter
from demandgraph.optim import Adam, adam_step


def _step(theta, grad, wd, lr=1e-3, steps=1):
    p = Parameter([theta])
    opt = Adam([p], lr, wd)
    for _ in range(steps):
        p.grad[...] = grad
        adam_step([p], opt)
    return p, opt


def test_first_step_moves_by_lr():
    p, _ = _step(1.0, 1.0, 0.0)
    assert p.value[0] == pytest.approx(0.999, abs=1e-9)


def test_zero_grad_leaves_theta():
    p, opt = _step(1.0, 0.0, 0.0, steps=3)
    assert p.value[0] == 1.0
    assert opt.m[0][0] == 0.0 and opt.v[0][0] == 0.0 and opt.t == 3


def test_moments_decay_without_grad():
    p = Parameter([1.0])
    opt = Adam([p], 1e-3, 0.0)
    p.grad[...] = 1.0
    opt.step()
    m, v = opt.m[0][0], opt.v[0][0]
    opt.step()  # step() zeroed the grad
    assert opt.m[0][0] == pytest.approx(0.9 * m) and opt.v[0][0] == pytest.approx(0.999 * v)


def test_coupled_weight_decay():
    p, opt = _step(1.0, 0.0, 5e-4)
    g = 5e-4
    assert 1.0 - p.value[0] == pytest.approx(1e-3 * g / (g + 1e-8), rel=1e-12)
    assert 1.0 - p.value[0] == pytest.approx(1e-3, rel=1e-4)
    assert opt.m[0][0] == pytest.approx(0.1 * 5e-4)


def test_deterministic(rng):
    grads = rng.normal(size=(20, 3))
    runs = []
    for _ in range(2):
        p = Parameter(np.ones(3))
        opt = Adam([p])
        for g in grads:
            p.grad[...] = g
            opt.step()
        runs.append(p.value.copy())
    assert np.array_equal(*runs)


def test_matches_reference_formula(rng):
    p = Parameter(rng.normal(size=4))
    theta = p.value.copy()
    opt = Adam([p], 0.01, 1e-2, 0.8, 0.95, 1e-6)
    m = v = np.zeros(4)
    for t in range(1, 6):
        g_raw = rng.normal(size=4)
        p.grad[...] = g_raw
        opt.step()
        g = g_raw + 1e-2 * theta
        m = 0.8 * m + 0.2 * g
        v = 0.95 * v + 0.05 * g * g
        theta = theta - 0.01 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.95**t)) + 1e-6)
    np.testing.assert_allclose(p.value, theta, rtol=1e-13)
