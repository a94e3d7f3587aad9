import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from disquo.disquo import (
    QmaxEstimator,
    WeightConfig,
    activation_probability,
    basic_update,
    effective_queue,
    f,
    f_inverse,
    f_prime,
    g,
    qmax_estimate,
    weight_functions,
)


def test_origin_values():
    v = weight_functions(0.0)
    assert v.f == 0.0 and v.g == 1.0 and v.f_prime == pytest.approx(1.0)


def test_values_at_one():
    v = weight_functions(1.0)
    assert v.f == pytest.approx(0.56485, abs=5e-6)
    assert v.g == pytest.approx(math.log(math.e + math.log(2.0)), rel=1e-12)
    assert v.g == pytest.approx(1.22712, abs=2e-5)


@pytest.mark.parametrize("x", [0.0, 1.0, 10.0, 1e6])
def test_derivative_bound_and_finite_difference(x):
    d = float(f_prime(x))
    assert d <= 1.0 / (1.0 + x)
    h = 1e-6 * max(1.0, x)
    fd = (float(f(x + h)) - float(f(max(x - h, 0.0)))) / (x + h - max(x - h, 0.0))
    assert d == pytest.approx(fd, rel=1e-4)


def test_shape_on_grid():
    x = np.linspace(0, 1e4, 20001)
    assert (g(x) >= 1).all()
    assert (np.diff(g(x)) >= 0).all()
    assert (np.diff(f(x)) >= 0).all()
    assert (np.diff(f(x), 2) <= 1e-12).all()


def test_negative_input_rejected():
    with pytest.raises(ValueError):
        weight_functions(-1.0)


@given(st.floats(0, 1e9))
def test_inverse_round_trip(x):
    y = float(f(x))
    assert f_inverse(y) == pytest.approx(x, rel=1e-9, abs=1e-9)


def test_effective_queue_examples():
    assert effective_queue(3, 0, 0.1, 4) == 3
    assert effective_queue(5, 1000, 0.2, 2) == 5
    floor = f_inverse(0.2 / 8 * float(f(1000)))
    assert floor == pytest.approx(0.082, abs=5e-3)
    assert effective_queue(0, 1000, 0.2, 2) == pytest.approx(floor)
    assert effective_queue(0, 1000, 0.2, 2, mode="conjecture") == 0


def test_activation_probability():
    assert activation_probability(0.0) == 0.5
    assert activation_probability(float(f(1.0))) == pytest.approx(0.6376, abs=5e-5)
    p = activation_probability(50.0)
    assert p == 1.0 - math.exp(-50.0) or p == pytest.approx(1.0 - math.exp(-50.0), abs=1e-16)
    assert np.isfinite(activation_probability(np.array([1e4, -1e4]))).all()


@given(st.floats(0, 100), st.floats(0, 100))
def test_probability_monotone(a, b):
    lo, hi = sorted((a, b))
    assert activation_probability(float(f(lo))) <= activation_probability(float(f(hi)))


def test_basic_update_two_activations():
    x = basic_update(np.zeros((2, 2), int), [0, 1], np.zeros((2, 2)), [0.1, 0.2])
    assert x.tolist() == [[1, 0], [0, 1]]


@pytest.mark.parametrize("coins", [[0.0, 0.0], [0.99, 0.99], [0.3, 0.9]])
def test_basic_update_blocked_pairs(coins):
    x0 = np.array([[1, 0], [0, 0]])
    x = basic_update(x0, [1, 0], np.zeros((2, 2)), coins)
    assert x.tolist() == x0.tolist()


def test_basic_update_rejects_bad_h():
    with pytest.raises(ValueError):
        basic_update(np.zeros((2, 2), int), [0, 0], np.zeros((2, 2)), [0.1, 0.1])


@st.composite
def chain_step(draw):
    n = draw(st.integers(1, 5))
    perm = draw(st.permutations(list(range(n))))
    rows = draw(st.permutations(list(range(n))))
    k = draw(st.integers(0, n))
    x = np.zeros((n, n), dtype=int)
    for i in range(k):
        x[i, rows[i]] = 1
    w = np.array(draw(st.lists(st.floats(0, 10), min_size=n * n, max_size=n * n))).reshape(n, n)
    coins = draw(st.lists(st.floats(0, 0.999), min_size=n, max_size=n))
    return x, np.array(perm), w, np.array(coins)


@given(chain_step())
def test_basic_update_invariants(case):
    x, h, w, coins = case
    y = basic_update(x, h, w, coins)
    assert (y.sum(axis=0) <= 1).all() and (y.sum(axis=1) <= 1).all()
    off_h = np.ones_like(x, dtype=bool)
    off_h[np.arange(len(h)), h] = False
    assert (y[off_h] == x[off_h]).all()
    assert (basic_update(x, h, w, coins) == y).all()


def test_batched_update_matches_single():
    rng = np.random.default_rng(0)
    n, m = 3, 50
    xs = np.zeros((m, n, n), dtype=int)
    hs = np.array([rng.permutation(n) for _ in range(m)])
    cs = rng.random((m, n))
    w = rng.random((n, n))
    batch = basic_update(xs, hs, w, cs)
    for k in range(m):
        assert (batch[k] == basic_update(xs[k], hs[k], w, cs[k])).all()


def test_estimator_warmup_and_static():
    est = QmaxEstimator(4)
    assert est.warmup and est.estimate == 0
    maxima = [3, 9, 2, 5]
    for slot in range(4):
        qmax_estimate(est, slot, maxima)
    assert not est.warmup and est.estimate == 9


def test_weight_config_modes():
    q = np.array([[0, 100], [4, 1]])
    assert np.allclose(WeightConfig().weights(q), f(q))
    exact = WeightConfig(epsilon=0.5, qmax_mode="exact").weights(q)
    assert exact[0, 0] > 0
    with pytest.raises(ValueError):
        WeightConfig(qmax_mode="nope")
    with pytest.raises(ValueError):
        WeightConfig(epsilon=1.5, qmax_mode="exact")
