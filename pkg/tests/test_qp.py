import itertools

import numpy as np
import pytest

from cooptlab.market import QuadraticProgram
from cooptlab.solvers.qp import kkt_residual, solve_qp


def _qp(h, c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, lower=None, upper=None):
    n = len(c)
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, float)
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, float)
    return QuadraticProgram(
        names=[f"x{i}" for i in range(n)], hessian=np.asarray(h, float), linear=np.asarray(c, float),
        a_eq=a_eq, b_eq=np.zeros(0) if b_eq is None else np.asarray(b_eq, float),
        eq_names=[f"e{i}" for i in range(a_eq.shape[0])],
        a_ub=a_ub, b_ub=np.zeros(0) if b_ub is None else np.asarray(b_ub, float),
        ub_names=[f"u{i}" for i in range(a_ub.shape[0])],
        lower=np.full(n, -np.inf) if lower is None else np.asarray(lower, float),
        upper=np.full(n, np.inf) if upper is None else np.asarray(upper, float))


def _active_set_oracle(h, c, a_eq, b_eq, a_ub, b_ub):
    """Best feasible KKT point over every choice of active inequality rows."""
    n = len(c)
    best = -np.inf
    for r in range(min(len(b_ub), n - len(b_eq)) + 1):
        for act in itertools.combinations(range(len(b_ub)), r):
            a = np.vstack([a_eq, a_ub[list(act)]])
            b = np.concatenate([b_eq, b_ub[list(act)]])
            k = np.block([[h, a.T], [a, np.zeros((len(b), len(b)))]])
            try:
                sol = np.linalg.solve(k, np.concatenate([-c, b]))
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            if np.all(a_ub @ x <= b_ub + 1e-9):
                best = max(best, 0.5 * x @ h @ x + c @ x)
    return best


def test_clipped_scalar():
    x, duals, report = solve_qp(_qp([[-1.0]], [1.0], lower=[0.0], upper=[0.5]))
    assert report.status == "optimal"
    assert x[0] == pytest.approx(0.5, abs=1e-10)
    assert duals.upper[0] == pytest.approx(0.5, abs=1e-10)


def test_symmetric_equality():
    qp = _qp(-np.eye(2), [0.0, 0.0], a_eq=[[1.0, 1.0]], b_eq=[2.0])
    x, duals, report = solve_qp(qp)
    assert np.allclose(x, [1, 1], atol=1e-10)
    assert duals.eq[0] == pytest.approx(-1.0, abs=1e-10)
    assert duals.by_name(qp)["e0"] == pytest.approx(-1.0, abs=1e-10)


def test_kkt_residual_exact_and_perturbed():
    qp = _qp([[-1.0]], [1.0], lower=[0.0], upper=[0.5])
    x, duals, _ = solve_qp(qp)
    assert kkt_residual(qp, x, duals) <= 1e-10
    assert kkt_residual(qp, x + 1e-3, duals) >= 1e-4


def test_pinned_variables_presolved():
    qp = _qp(-np.eye(3), [1.0, 1.0, 1.0], lower=[0.0, 2.0, 0.0], upper=[5.0, 2.0, 5.0],
             a_ub=[[1.0, 1.0, 1.0]], b_ub=[3.0])
    x, _, report = solve_qp(qp)
    assert report.status == "optimal"
    assert np.allclose(x, [0.5, 2.0, 0.5], atol=1e-9)


def test_random_against_active_set_enumeration():
    rng = np.random.default_rng(20240)
    for trial in range(200):
        n = int(rng.integers(1, 21))
        m_ub = int(rng.integers(0, 11))
        m_eq = int(rng.integers(0, min(n, 3)))
        b = rng.normal(size=(n, n))
        h = -(b @ b.T + 0.1 * np.eye(n))
        c = rng.normal(size=n) * 3
        x0 = rng.normal(size=n)
        a_eq = rng.normal(size=(m_eq, n))
        a_ub = rng.normal(size=(m_ub, n))
        b_eq = a_eq @ x0
        b_ub = a_ub @ x0 + rng.uniform(0, 1, size=m_ub)
        if n > 10:
            m_ub = min(m_ub, 6)          # keep the enumeration cheap
            a_ub, b_ub = a_ub[:m_ub], b_ub[:m_ub]
        x, duals, report = solve_qp(_qp(h, c, a_eq, b_eq, a_ub, b_ub))
        assert report.status == "optimal", (trial, report.message)
        ref = _active_set_oracle(h, c, a_eq, b_eq, a_ub, b_ub)
        got = 0.5 * x @ h @ x + c @ x
        assert abs(got - ref) <= 1e-6 * (1 + abs(ref)), trial


def test_random_boxed_against_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        b = rng.normal(size=(n, n))
        h = -(b @ b.T + 0.1 * np.eye(n))
        c = rng.normal(size=n) * 3
        lo = -rng.uniform(0, 1, n)
        hi = rng.uniform(0, 1, n)
        a_ub = rng.normal(size=(2, n))
        b_ub = np.abs(rng.normal(size=2)) + 0.1          # x = 0 is feasible
        x, _, report = solve_qp(_qp(h, c, a_ub=a_ub, b_ub=b_ub, lower=lo, upper=hi))
        assert report.status == "optimal"
        rows = np.vstack([a_ub, np.eye(n), -np.eye(n)])
        rhs = np.concatenate([b_ub, hi, -lo])
        ref = _active_set_oracle(h, c, np.zeros((0, n)), np.zeros(0), rows, rhs)
        assert abs(0.5 * x @ h @ x + c @ x - ref) <= 1e-6 * (1 + abs(ref))
