"""Reported market quantities and their percent-of-base normalization.

All money in EUR, quantities in MWh (one-hour horizon, so MW and MWh
coincide numerically).  Reserve duals are per MW of committed capacity, as
produced by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import DemandCurve, MarketConfig, MarketSolution, SystemConfig
from .presets import BASE_VALUES
from .scenarios import ScenarioSet
from .solvers.risk import cvar


def equilibrium_price(d: float, curve: DemandCurve) -> float:
    """Inverse demand Gamma0 - Phi0 d (EUR/MWh)."""
    if d < 0:
        raise ValueError(f"demand must be nonnegative, got {d}")
    return curve.gamma0 - curve.phi0 * d


def consumer_payment(d: float, curve: DemandCurve) -> float:
    """Energy bill of the consumers: price times quantity (EUR)."""
    return equilibrium_price(d, curve) * d


def reserve_payment(ru, rd, kappa_up: float, gamma_up: float,
                    kappa_dn: float, gamma_dn: float) -> float:
    """sum_g ru_g (kappa_up - gamma_up) + rd_g (kappa_dn - gamma_dn) (EUR).

    Negative values are penalties rebated to the consumers.
    """
    return float(np.sum(ru) * (kappa_up - gamma_up) + np.sum(rd) * (kappa_dn - gamma_dn))


def reserve_capacity_payment(sol: MarketSolution) -> float:
    return reserve_payment(sol.ru, sol.rd, sol.kappa_up, sol.gamma_up, sol.kappa_dn, sol.gamma_dn)


def gross_welfare(sol: MarketSolution, sys: SystemConfig, mkt: MarketConfig,
                  scen: ScenarioSet) -> float:
    """Co-optimization objective at the solution's schedule (EUR).

    Consumer surplus + FiP y + (1 - Psi) E[delta] + Psi CVaR(delta), with the
    CVaR re-evaluated from the realized scenario profits rather than taken
    from any auxiliaries of the solve.
    """
    curve = sys.demand
    surplus = curve.gamma0 * sol.d - 0.5 * curve.phi0 * sol.d ** 2
    delta = sol.scenario_profits(sys)
    p = np.asarray(scen.probabilities, dtype=float)
    risk = cvar(delta, p, mkt.theta).value if mkt.psi > 0.0 else 0.0
    return float(surplus + mkt.fip * sol.y + (1.0 - mkt.psi) * (p @ delta) + mkt.psi * risk)


def net_welfare(gross: float, y: float, fip: float) -> float:
    """Gross welfare less the FiP paid on the DA wind quantity (EUR)."""
    return gross - fip * y


@dataclass(frozen=True)
class MetricsReport:
    model: str
    system: str
    market: str
    demand_da: float                     # MWh
    equil_price: float                   # EUR/MWh
    gross_welfare: float                 # EUR
    net_welfare: float
    consumer_payment: float
    reserve_capacity_payment: float
    pct_demand: float                    # 100 * raw / base
    pct_price: float
    pct_gross: float
    pct_net: float
    pct_consumer: float
    pct_reserve: float


def percent(raw: float, base: float) -> float:
    return 100.0 * raw / base


def compute_metrics(sol: MarketSolution, sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet,
                    base: dict[str, float] | None = None) -> MetricsReport:
    """All six quantities with their percent-of-base values.  ``base`` maps
    demand, price, welfare and payment to their normalization constants;
    both welfare figures share one base, as do both payments."""
    b = dict(BASE_VALUES) if base is None else {**BASE_VALUES, **base}
    gross = gross_welfare(sol, sys, mkt, scen)
    net = net_welfare(gross, sol.y, mkt.fip)
    price = equilibrium_price(max(sol.d, 0.0), sys.demand)
    bill = consumer_payment(max(sol.d, 0.0), sys.demand)
    reserve = reserve_capacity_payment(sol)
    return MetricsReport(
        model=sol.model, system=sys.name, market=mkt.name,
        demand_da=sol.d, equil_price=price, gross_welfare=gross, net_welfare=net,
        consumer_payment=bill, reserve_capacity_payment=reserve,
        pct_demand=percent(sol.d, b["demand"]),
        pct_price=percent(price, b["price"]),
        pct_gross=percent(gross, b["welfare"]),
        pct_net=percent(net, b["welfare"]),
        pct_consumer=percent(bill, b["payment"]),
        pct_reserve=percent(reserve, b["payment"]),
    )
