"""Market solves: co-optimization (QP or its KKT system), the separately
cleared equilibrium by fixed-point iteration on the CVaR scenario weights,
and continuation in the homotopy parameter t.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from ..market import (MarketConfig, MarketSolution, QuadraticProgram, SolveReport, SystemConfig,
                      build_com_qp, build_eqm_mcp, build_weighted_qp, com_kkt,
                      reweight_eqm_mcp, reweight_qp, scenario_duals, unpack)
from ..scenarios import ScenarioSet
from . import qp as _qp
from .lemke import WarmStart, lemke
from .risk import cvar

FEASIBILITY_TOL = 1e-6      # MW, reserve bands and balances
FIXED_POINT_TOL = 1e-8
MAX_FIXED_POINT = 100
DAMPING = 0.5
MAX_CONTINUATIONS = 3
CONTINUATION_STEP = 0.25
JUMP_FACTOR = 10.0
JUMP_FLOOR = 1e-3           # MW; smaller steps are never jumps


# ---------------------------------------------------------------------------
# checks


def feasibility_violation(sol: MarketSolution, mkt: MarketConfig, wind_capacity: float,
                          scen: ScenarioSet) -> float:
    """Max violation (MW) of the reserve bands and the DA/RT balances."""
    pol = mkt.reserve
    req = pol.mx * sol.x.sum() + pol.my * sol.y
    up, dn = sol.ru.sum(), sol.rd.sum()
    band = max(pol.a_lo * req - up, up - pol.a_up * req, pol.b * up - dn, dn - up, 0.0)
    da = abs(sol.d - sol.x.sum() - sol.y)
    rt = np.abs(sol.d - sol.x.sum() - (sol.u - sol.v).sum(axis=0) - sol.yhat - sol.shed)
    caps = np.asarray(scen.values) * wind_capacity
    wind = max(float(np.max(sol.yhat - caps, initial=0.0)), sol.y - wind_capacity, 0.0)
    return float(max(band, da, np.max(rt, initial=0.0), wind))


def _bound_duals(qp: QuadraticProgram, x, ub, eq):
    """Bound multipliers that close stationarity as far as signs allow."""
    r = qp.effective_hessian() @ x + qp.linear - qp.a_ub.T @ ub - qp.a_eq.T @ eq
    lower = np.where(np.isfinite(qp.lower), np.maximum(-r, 0.0), 0.0)
    upper = np.where(np.isfinite(qp.upper), np.maximum(r, 0.0), 0.0)
    return lower, upper


def kkt_residual(qp: QuadraticProgram, solution) -> float:
    """Scaled KKT residual of ``qp`` at a solution.

    ``solution`` is either a ``MarketSolution`` built from this QP or a pair
    (x, QPDuals).  For a ``MarketSolution`` the bound multipliers are not
    stored; they are recovered from the stationarity rows.
    """
    if isinstance(solution, MarketSolution):
        x = solution.vector
        if x.shape != (qp.n,):
            raise ValueError(f"solution has {x.size} variables, QP has {qp.n}")
        ub = np.array([solution.duals[c] for c in qp.ub_names])
        eq = np.array([solution.duals[c] for c in qp.eq_names])
        lower, upper = _bound_duals(qp, x, ub, eq)
        duals = _qp.QPDuals(eq=eq, ub=ub, lower=lower, upper=upper)
    else:
        x, duals = solution
        x = np.asarray(x, dtype=float)
        if x.shape != (qp.n,):
            raise ValueError(f"solution has {x.size} variables, QP has {qp.n}")
    return _qp.kkt_residual(qp, x, duals)


def _checked(sol: MarketSolution, sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet):
    if not sol.report.ok:
        return sol
    viol = feasibility_violation(sol, mkt, sys.wind_capacity, scen)
    if viol > FEASIBILITY_TOL:
        sol.report = dataclasses.replace(
            sol.report, status="numerical-failure",
            message=f"reserve band or balance violated by {viol:.3e} MW")
    return sol


# ---------------------------------------------------------------------------
# co-optimization


def solve_com(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet) -> MarketSolution:
    """Co-optimized market: the risk-averse QP by interior point."""
    qp = build_com_qp(sys, mkt, scen)
    x, duals, report = _qp.solve_qp(qp)
    sol = unpack(qp, len(sys.generators), scen.n, x, duals.ub, duals.eq, report, "COM")
    return _checked(sol, sys, mkt, scen)


def _split_mcp(qp: QuadraticProgram, z):
    n, m_ub = qp.n, len(qp.ub_names)
    return z[:n], z[n:n + m_ub], z[n + m_ub:]


def solve_com_via_mcp(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet) -> MarketSolution:
    """Co-optimized market through its KKT complementarity system and Lemke."""
    qp = build_com_qp(sys, mkt, scen)
    res = lemke(com_kkt(qp))
    x, ub, eq = _split_mcp(qp, res.z)
    sol = unpack(qp, len(sys.generators), scen.n, x, ub, eq, res.report, "COM")
    return _checked(sol, sys, mkt, scen)


# ---------------------------------------------------------------------------
# separately cleared equilibrium


def _continue_in_t(sys, mkt, scen, phi, t: float):
    """Reach ``t`` from the co-optimized end t = 1 in warm-started steps.

    A failed step is halved.  Returns the basis at ``t``, or the failing
    Lemke result after MAX_CONTINUATIONS failures.
    """
    anchor = 1.0
    res = lemke(build_eqm_mcp(sys, mkt, scen, phi, anchor))
    if not res.report.ok:
        return res
    basis = res.basis
    step = CONTINUATION_STEP
    failures = 0
    while anchor > t:
        nxt = max(t, anchor - step)
        res = lemke(build_eqm_mcp(sys, mkt, scen, phi, nxt), basis=basis)
        if res.report.ok:
            anchor, basis = nxt, res.basis
            continue
        failures += 1
        if failures >= MAX_CONTINUATIONS:
            return res
        step /= 2.0
    return basis


def _solve_weighted(sys, mkt, scen, mcp, phi, t, basis, warm):
    res = lemke(mcp, basis=basis, warm=warm)
    if res.report.ok or t == 1.0:
        return res
    found = _continue_in_t(sys, mkt, scen, phi, t)
    if not isinstance(found, np.ndarray):
        return found
    return lemke(mcp, basis=found, warm=warm)


def weight_target(profits, probs, mkt: MarketConfig) -> np.ndarray:
    """(1 - Psi) p + Psi q(profits): the weights the iteration moves toward."""
    p = np.asarray(probs, dtype=float)
    if mkt.psi == 0.0:
        return p.copy()
    q = cvar(profits, p, mkt.theta).weights
    return (1.0 - mkt.psi) * p + mkt.psi * q


def solve_eqm(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet, t: float = 0.0,
              weights=None, basis=None) -> MarketSolution:
    """Separately cleared market.

    Starting from phi = p (or ``weights``), each pass solves the EQM
    complementarity system at phi, takes the scenario profits of the result
    and moves phi half way to (1 - Psi) p + Psi q, with q the CVaR weights
    of those profits.  The loop stops when the undamped gap between target
    and phi is at most FIXED_POINT_TOL; the returned solution belongs to the
    terminal phi, so re-evaluating the target at it reproduces phi.
    ``basis`` warm-starts the first Lemke solve; the last basis is returned
    as ``solution.basis``.
    """
    t0 = time.perf_counter()
    p = np.asarray(scen.probabilities, dtype=float)
    phi = p.copy() if weights is None else np.asarray(weights, dtype=float).copy()
    G = len(sys.generators)
    nominal = build_eqm_mcp(sys, mkt, scen, p, t)
    qp0 = build_weighted_qp(sys, mkt, scen, p)
    warm = WarmStart()
    gap = float("inf")
    sol = None
    for it in range(1, MAX_FIXED_POINT + 1):
        mcp = reweight_eqm_mcp(nominal, sys, mkt, scen, phi)
        step = _solve_weighted(sys, mkt, scen, mcp, phi, t, basis, warm)
        basis = None
        qp = reweight_qp(qp0, sys, mkt, scen, phi)
        x, ub, eq = _split_mcp(qp, step.z)
        ub, eq = scenario_duals(qp, ub, eq, scen, phi)
        if not step.report.ok:
            report = dataclasses.replace(step.report, iterations=it,
                                         wall_time=time.perf_counter() - t0,
                                         message=f"pass {it}: {step.report.message}",
                                         fixed_point_residual=gap)
            return unpack(qp, G, scen.n, x, ub, eq, report, "EQM", weights=phi)
        sol = unpack(qp, G, scen.n, x, ub, eq, step.report, "EQM", weights=phi)
        profits = sol.scenario_profits(sys)
        target = weight_target(profits, p, mkt)
        gap = float(np.max(np.abs(target - phi)))
        if gap <= FIXED_POINT_TOL:
            status, message = "optimal", ""
            break
        phi = (1.0 - DAMPING) * phi + DAMPING * target
        phi /= phi.sum()
    else:
        status, message = "iteration-limit", f"weight gap {gap:.3e} after {MAX_FIXED_POINT} passes"
    sol.report = SolveReport(status=status, iterations=it, residual=step.report.residual,
                             wall_time=time.perf_counter() - t0, message=message,
                             fixed_point_residual=gap)
    sol.basis = step.basis
    return _checked(sol, sys, mkt, scen)


# ---------------------------------------------------------------------------
# homotopy and discontinuities


def homotopy_path(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet,
                  ts) -> list[MarketSolution]:
    """EQM solutions along the given t values, each warm-started from the
    previous basis and weights."""
    out = []
    basis, weights = None, None
    for t in ts:
        sol = solve_eqm(sys, mkt, scen, t=float(t), weights=weights, basis=basis)
        out.append(sol)
        if sol.report.ok:
            basis, weights = sol.basis, sol.weights
    return out


@dataclass(frozen=True)
class JumpReport:
    steps: np.ndarray            # change between consecutive points
    median: float | None
    jumps: tuple[int, ...]       # i flags the step from point i to i + 1
    message: str = ""


def detect_jumps(points, factor: float = JUMP_FACTOR, floor: float = JUMP_FLOOR) -> JumpReport:
    """Flag steps whose max-norm change exceeds ``factor`` times the median
    step (and ``floor``).  Fewer than three points give no statistics."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        return JumpReport(np.zeros(0), None, (), "fewer than two points")
    steps = np.max(np.abs(np.diff(pts, axis=0)), axis=1)
    if steps.size < 2:
        return JumpReport(steps, None, (), "insufficient data for jump statistics")
    med = float(np.median(steps))
    thresh = max(factor * med, floor)
    jumps = tuple(int(i) for i in np.flatnonzero(steps > thresh))
    return JumpReport(steps, med, jumps)


def primal_point(sol: MarketSolution) -> np.ndarray:
    """First-stage schedule in MW, the vector jump detection compares."""
    return sol.first_stage


__all__ = [
    "FEASIBILITY_TOL", "FIXED_POINT_TOL", "JumpReport", "detect_jumps", "feasibility_violation",
    "homotopy_path", "kkt_residual", "primal_point", "solve_com", "solve_com_via_mcp",
    "solve_eqm", "weight_target",
]
