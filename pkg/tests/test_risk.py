import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cooptlab.solvers.risk import cvar


def _envelope_min(pi, p, theta):
    """Minimum of q'pi over {0 <= q <= p/(1-theta), sum q = 1} by vertex enumeration.

    Each vertex has every coordinate but one at a bound."""
    cap = p / (1 - theta)
    n = len(pi)
    best = np.inf
    for free in range(n):
        others = [i for i in range(n) if i != free]
        for at_cap in itertools.product((False, True), repeat=n - 1):
            q = np.zeros(n)
            for i, hi in zip(others, at_cap):
                q[i] = cap[i] if hi else 0.0
            q[free] = 1.0 - q.sum()
            if -1e-12 <= q[free] <= cap[free] + 1e-12:
                best = min(best, float(q @ pi))
    return best


def test_worst_case_tail():
    r = cvar([10, 20, 30], [1 / 3] * 3, 0.95)
    assert r.value == pytest.approx(10.0, abs=1e-12)
    assert np.allclose(r.weights, [1, 0, 0])


def test_half_tail():
    r = cvar([10, 20, 30], [1 / 3] * 3, 0.5)
    assert r.value == pytest.approx(40 / 3, abs=1e-12)
    assert np.allclose(r.weights, [2 / 3, 1 / 3, 0])
    assert r.var_level == 20


@pytest.mark.parametrize("theta", [0.05, 0.5, 0.95])
def test_constant_profits(theta):
    assert cvar([7.5] * 4, [0.25] * 4, theta).value == pytest.approx(7.5, abs=1e-12)


def test_ties_by_index():
    r = cvar([5, 5, 9], [1 / 3] * 3, 0.95)
    assert np.allclose(r.weights, [1, 0, 0])


def test_invalid_inputs():
    with pytest.raises(ValueError):
        cvar([1, 2], [0.5, 0.6], 0.5)
    with pytest.raises(ValueError):
        cvar([1, 2], [0.5, 0.5], 1.0)


def test_against_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        p = rng.dirichlet(np.ones(n))
        pi = rng.normal(scale=100, size=n)
        if rng.random() < 0.2:
            pi = np.round(pi / 50) * 50       # ties
        theta = float(rng.uniform(0.01, 0.99))
        r = cvar(pi, p, theta)
        assert abs(r.value - _envelope_min(pi, p, theta)) <= 1e-9 * (1 + np.abs(pi).max())
        assert np.all(r.weights >= 0) and np.all(r.weights <= p / (1 - theta) + 1e-12)
        assert abs(r.weights.sum() - 1) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=12), st.floats(0.01, 0.99))
def test_cvar_below_mean(profits, theta):
    p = np.full(len(profits), 1 / len(profits))
    r = cvar(profits, p, theta)
    assert r.value <= float(p @ profits) + 1e-9 * (1 + max(map(abs, profits)))
    assert r.value >= min(profits) - 1e-9 * (1 + max(map(abs, profits)))
