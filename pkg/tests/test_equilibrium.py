import dataclasses

import numpy as np
import pytest
import scipy.optimize

from conftest import case, com, eqm
from cooptlab.market import (DemandCurve, DispatchableGen, MarketConfig, QuadraticProgram, SystemConfig,
                             build_com_qp)
from cooptlab.scenarios import ScenarioSet
from cooptlab.solvers.equilibrium import (detect_jumps, homotopy_path, kkt_residual, primal_point,
                                          solve_com, solve_eqm, weight_target)
from cooptlab.solvers.qp import solve_qp
from cooptlab.solvers.risk import cvar


def _deterministic_oracle(sys, mkt, zeta):
    """Welfare-maximizing d for a single wind outcome: an LP in MW/EUR for each
    d, maximized over d by bounded scalar search.  Built without the model
    layout or any scenario machinery."""
    gens = sys.generators
    G = len(gens)
    cap = np.array([g.capacity for g in gens])
    cost = np.array([g.cost for g in gens])
    pol = mkt.reserve
    # columns: x, y, ru, rd, u, v, yhat, shed
    X, Y = np.arange(G), G
    RU, RD = G + 1 + np.arange(G), 2 * G + 1 + np.arange(G)
    U, V = 3 * G + 1 + np.arange(G), 4 * G + 1 + np.arange(G)
    YH, SH = 5 * G + 1, 5 * G + 2
    n = 5 * G + 3
    c = np.zeros(n)
    c[X], c[Y], c[U], c[V], c[SH] = cost, -mkt.fip, cost, -cost, sys.value_of_lost_load

    a_ub, b_ub = [], []

    def le(coefs, rhs):
        r = np.zeros(n)
        for j, v in coefs:
            r[j] += v
        a_ub.append(r)
        b_ub.append(rhs)

    for g in range(G):
        le([(X[g], 1), (RU[g], 1)], cap[g])
        le([(RD[g], 1), (X[g], -1)], 0)
        le([(RU[g], 1), (X[g], gens[g].ramp_up * sys.lam)], gens[g].ramp_up * cap[g])
        le([(RD[g], 1), (X[g], gens[g].ramp_down * sys.lam)], gens[g].ramp_down * cap[g])
        le([(U[g], 1), (RU[g], -1)], 0)
        le([(V[g], 1), (RD[g], -1)], 0)
    le([(j, pol.a_lo * pol.mx) for j in X] + [(Y, pol.a_lo * pol.my)] + [(j, -1) for j in RU], 0)
    le([(j, -pol.a_up * pol.mx) for j in X] + [(Y, -pol.a_up * pol.my)] + [(j, 1) for j in RU], 0)
    le([(j, pol.b) for j in RU] + [(j, -1) for j in RD], 0)
    le([(j, -1) for j in RU] + [(j, 1) for j in RD], 0)
    a_eq = np.zeros((2, n))
    a_eq[0, X], a_eq[0, Y] = 1, 1
    a_eq[1, X], a_eq[1, U], a_eq[1, V], a_eq[1, YH], a_eq[1, SH] = 1, 1, -1, 1, 1

    def dispatch_value(d):
        bounds = [(0, None)] * n
        bounds[Y], bounds[YH], bounds[SH] = (0, sys.wind_capacity), (0, zeta * sys.wind_capacity), (0, d)
        lp = scipy.optimize.linprog(c, A_ub=np.array(a_ub), b_ub=b_ub, A_eq=a_eq, b_eq=[d, d],
                                    bounds=bounds, method="highs")
        return -lp.fun if lp.status == 0 else -1e18

    dem = sys.demand
    res = scipy.optimize.minimize_scalar(
        lambda d: -(dem.gamma0 * d - 0.5 * dem.phi0 * d * d + dispatch_value(d)),
        bounds=(0.0, dem.choke_quantity), method="bounded", options={"xatol": 1e-7})
    return res.x, -res.fun


def _toy(theta):
    sys = SystemConfig("toy", (DispatchableGen(1, "CCGT", 1000, 40, 0.5, 0.5),
                               DispatchableGen(2, "Coal", 800, 20, 0.25, 0.25)),
                       1000.0, DemandCurve(120.0, 0.05), 1.0)
    mkt = MarketConfig("toy", mu=0.3, fip=10.0, psi=1.0, my=0.15, theta=theta, n_scenarios=2)
    scen = ScenarioSet((0.1, 0.5), (0.5, 0.5), (0.0, 0.3, 1.0))
    return sys, mkt, scen


# --- kkt_residual -------------------------------------------------------------

def test_kkt_residual_scalar():
    qp = QuadraticProgram(["x"], np.array([[-1.0]]), np.array([1.0]), np.zeros((0, 1)), np.zeros(0), [],
                          np.zeros((0, 1)), np.zeros(0), [], np.zeros(1), np.full(1, 0.5))
    x, duals, _ = solve_qp(qp)
    assert kkt_residual(qp, (x, duals)) <= 1e-10
    assert kkt_residual(qp, (x - 1e-3, duals)) >= 1e-4


@pytest.mark.parametrize("system,market", [("HH", "WindH"), ("LL", "FiPH"), ("VLL", "ResH")])
def test_com_solution_kkt(system, market):
    sys, mkt, scen = case(system, market)
    sol = com(system, market)
    assert sol.report.status == "optimal"
    assert kkt_residual(build_com_qp(sys, mkt, scen), sol) <= 1e-6


def test_kkt_residual_shape_check():
    qp = build_com_qp(*case("HH", "WindH"))
    with pytest.raises(ValueError):
        kkt_residual(qp, (np.zeros(3), None))


# --- co-optimization ------------------------------------------------------------

@pytest.mark.parametrize("system", ["LL", "HH", "VLH"])
def test_deterministic_equivalent(system):
    sys, mkt, _ = case(system, "RiskL")
    sol = solve_com(sys, mkt, ScenarioSet.single(mkt.mu))
    assert sol.report.status == "optimal"
    d_ref, obj_ref = _deterministic_oracle(sys, mkt, mkt.mu)
    assert abs(sol.objective - obj_ref) <= 1e-6 * abs(obj_ref)
    assert abs(sol.d - d_ref) <= 1e-6 * d_ref


@pytest.mark.parametrize("system,market", [("HL", "FiPL"), ("LL", "RiskH")])
def test_cvar_term_is_worst_scenario(system, market):
    sys, mkt, scen = case(system, market)
    assert mkt.theta == 0.95 and scen.n == 12 and mkt.psi > 0
    sol = com(system, market)
    delta = sol.scenario_profits(sys)
    p = np.asarray(scen.probabilities)
    term = sol.eta - float(p @ sol.s) / (1.0 - mkt.theta)
    ref = cvar(delta, p, mkt.theta).value
    assert ref == pytest.approx(delta.min(), abs=1e-9)
    assert abs(term - ref) <= 1e-6 * (1 + abs(ref))


# --- separately cleared market ----------------------------------------------------

@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_risk_neutral_converges_immediately(t):
    sol = eqm("LL", "RiskL", t)
    assert sol.report.status == "optimal"
    assert sol.report.iterations <= 2


def test_t1_matches_com_when_risk_neutral():
    a, b = com("HL", "RiskL"), eqm("HL", "RiskL", 1.0)
    assert b.report.status == "optimal"
    assert np.max(np.abs(a.first_stage - b.first_stage)) * 1e-3 <= 1e-5
    assert abs(a.d - b.d) * 1e-3 <= 1e-5


@pytest.mark.parametrize("theta", [0.3, 0.5, 0.95])
def test_toy_fixed_point(theta):
    sys, mkt, scen = _toy(theta)
    sol = solve_eqm(sys, mkt, scen)
    assert sol.report.status == "optimal"
    target = weight_target(sol.scenario_profits(sys), scen.probabilities, mkt)
    assert np.max(np.abs(target - sol.weights)) <= 1e-8
    assert sol.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_risk_averse_eqm_fixed_point():
    sys, mkt, scen = case("HL", "RiskH")
    sol = eqm("HL", "RiskH")
    assert sol.report.status == "optimal"
    target = weight_target(sol.scenario_profits(sys), scen.probabilities, mkt)
    assert np.max(np.abs(target - sol.weights)) <= 1e-8


def test_homotopy_path_continuous():
    sys, mkt, scen = case("LL", "WindL", 0.0)
    path = homotopy_path(sys, mkt, scen, np.linspace(1.0, 0.0, 11))
    assert all(s.report.status == "optimal" for s in path)
    report = detect_jumps([primal_point(s) for s in path])
    assert report.jumps == ()


def test_detect_jumps_synthetic():
    pts = np.cumsum(np.r_[0.0, np.full(10, 1.0), 50.0, np.full(5, 1.0)])[:, None]
    report = detect_jumps(pts)
    assert report.median == pytest.approx(1.0)
    assert report.jumps == (10,)


def test_detect_jumps_floor_and_short_series():
    flat = detect_jumps(np.r_[0.0, 0.0, 0.0, 1e-4][:, None])
    assert flat.jumps == ()
    assert detect_jumps([[0.0], [1.0]]).median is None
    assert "insufficient" in detect_jumps([[0.0], [1.0]]).message


def test_weight_target_limits():
    mkt = dataclasses.replace(_toy(0.5)[1], psi=0.0)
    p = np.array([0.5, 0.5])
    assert np.array_equal(weight_target([3.0, -1.0], p, mkt), p)
    mkt1 = dataclasses.replace(mkt, psi=1.0, theta=0.95)
    assert np.allclose(weight_target([3.0, -1.0], p, mkt1), [0.0, 1.0])
