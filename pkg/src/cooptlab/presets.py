"""Built-in case-study data and the config-file overlay.

Capacities in MW, costs in EUR/MWh, ramp factors and reserve factors in p.u.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

from .market import DemandCurve, DispatchableGen, MarketConfig, SystemConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

GAMMA0 = 209.78
PHI0 = 0.0056
WIND_CAPACITY = 22573.00

# normalization bases for the percent metrics
BASE_VALUES = {
    "demand": 30120.39,           # MWh
    "price": 78.15,               # EUR/MWh
    "welfare": 3552878.90,        # EUR, gross and net
    "payment": 1837531.10,        # EUR, consumer and reserve capacity
}

# (tech, cost, ramp %, capacity High, Low, Very Low)
_FLEET = (
    ("CCGT", 44.31, 53.33, 0.0, 3274.98, 1274.98),
    ("CCGT", 43.88, 53.33, 0.0, 2056.58, 2056.58),
    ("CCGT", 43.45, 53.33, 10632.7, 2153.5, 2153.5),
    ("Nuclear", 10.91, 2.08, 1519.23, 1519.23, 1519.23),
    ("Nuclear", 10.29, 2.08, 6053.35, 6053.35, 6053.35),
    ("Coal", 37.5, 20.0, 2035.89, 2035.89, 2035.89),
    ("Coal", 38.44, 25.0, 5119.13, 5119.13, 5119.13),
    ("Coal", 19.77, 25.0, 1198.12, 1198.12, 1198.12),
    ("Coal", 20.24, 25.0, 1945.51, 1945.51, 1945.51),
)
_CAPACITY_COLUMN = {"high": 3, "low": 4, "very_low": 5}

# system preset -> (generation level, Lambda)
SYSTEM_PRESETS = {
    "HH": ("high", 0.0),
    "HL": ("high", 1.0),
    "LL": ("low", 1.0),
    "VLL": ("very_low", 1.0),
    "VLH": ("very_low", 0.0),
}

# market preset -> (mu, FiP, Psi, My)
MARKET_PRESETS = {
    "WindL": (0.0401, 30.0, 0.40, 0.15),
    "WindH": (0.6500, 30.0, 0.40, 0.15),
    "FiPL": (0.2383, 0.0, 0.40, 0.15),
    "FiPH": (0.2383, 80.0, 0.40, 0.15),
    "RiskL": (0.2383, 30.0, 0.00, 0.15),
    "RiskH": (0.2383, 30.0, 1.00, 0.15),
    "ResL": (0.2383, 0.0, 0.40, 0.60),
    "ResH": (0.2383, 80.0, 0.40, 0.60),
}


def fleet(level: str) -> tuple[DispatchableGen, ...]:
    col = _CAPACITY_COLUMN[level]
    return tuple(
        DispatchableGen(id=i, tech=row[0], capacity=row[col], cost=row[1],
                        ramp_up=row[2] / 100.0, ramp_down=row[2] / 100.0)
        for i, row in enumerate(_FLEET, start=1)
    )


def system_preset(name: str) -> SystemConfig:
    try:
        level, lam = SYSTEM_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown system preset {name!r}; choose from {sorted(SYSTEM_PRESETS)}") from None
    return SystemConfig(name=name, generators=fleet(level), wind_capacity=WIND_CAPACITY,
                        demand=DemandCurve(GAMMA0, PHI0), lam=lam)


def market_preset(name: str) -> MarketConfig:
    try:
        mu, fip, psi, my = MARKET_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown market preset {name!r}; choose from {sorted(MARKET_PRESETS)}") from None
    return MarketConfig(name=name, mu=mu, fip=fip, psi=psi, my=my)


def builtin_presets() -> tuple[dict[str, SystemConfig], dict[str, MarketConfig]]:
    systems = {name: system_preset(name) for name in SYSTEM_PRESETS}
    markets = {name: market_preset(name) for name in MARKET_PRESETS}
    return systems, markets


# ---------------------------------------------------------------------------
# config files
#
#   [demand]          gamma0, phi0
#   [reserve]         mx, a_up, a_lo, b
#   [wind]            capacity
#   [market]          mu, fip, psi, my, theta, n_scenarios
#   [system]          lambda, voll
#   [generators.N]    tech, capacity, cost, ramp_up, ramp_down   (N = 1-based id)
#   [base]            demand, price, welfare, payment
#
# Every key is optional; absent keys keep the preset value.

_MARKET_KEYS = {"mu", "fip", "psi", "my", "theta", "n_scenarios"}
_RESERVE_KEYS = {"mx", "a_up", "a_lo", "b"}
_GEN_KEYS = {"tech", "capacity", "cost", "ramp_up", "ramp_down"}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    with open(Path(path), "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def _check_keys(section: str, table: dict, allowed: set[str]):
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"[{section}] has unknown keys: {sorted(extra)}")


def _num(section: str, key: str, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
    return float(value)


def apply_overrides(system: SystemConfig, market: MarketConfig, config: dict
                    ) -> tuple[SystemConfig, MarketConfig, dict[str, float]]:
    """Overlay a parsed config tree on a (system, market) pair.

    Returns the updated pair and the normalization bases.
    """
    config = dict(config)
    unknown = set(config) - {"demand", "reserve", "wind", "market", "system", "generators", "base"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    sys_changes: dict = {}
    mkt_changes: dict = {}

    demand = config.get("demand", {})
    _check_keys("demand", demand, {"gamma0", "phi0"})
    if demand:
        sys_changes["demand"] = DemandCurve(
            gamma0=_num("demand", "gamma0", demand.get("gamma0", system.demand.gamma0)),
            phi0=_num("demand", "phi0", demand.get("phi0", system.demand.phi0)),
        )

    wind = config.get("wind", {})
    _check_keys("wind", wind, {"capacity"})
    if "capacity" in wind:
        sys_changes["wind_capacity"] = _num("wind", "capacity", wind["capacity"])

    section = config.get("system", {})
    _check_keys("system", section, {"lambda", "voll"})
    if "lambda" in section:
        sys_changes["lam"] = _num("system", "lambda", section["lambda"])
    if "voll" in section:
        sys_changes["voll"] = _num("system", "voll", section["voll"])

    gens = config.get("generators", {})
    if gens:
        by_id = {g.id: g for g in system.generators}
        for key, table in gens.items():
            try:
                gid = int(key)
            except ValueError:
                raise ConfigError(f"generator ids must be integers, got {key!r}") from None
            _check_keys(f"generators.{key}", table, _GEN_KEYS)
            base = by_id.get(gid, DispatchableGen(id=gid, tech="", capacity=0.0, cost=0.0,
                                                 ramp_up=0.0, ramp_down=0.0))
            fields = {k: (v if k == "tech" else _num(f"generators.{key}", k, v)) for k, v in table.items()}
            by_id[gid] = dataclasses.replace(base, **fields)
        sys_changes["generators"] = tuple(by_id[i] for i in sorted(by_id))

    reserve = config.get("reserve", {})
    _check_keys("reserve", reserve, _RESERVE_KEYS)
    for k, v in reserve.items():
        mkt_changes[k] = _num("reserve", k, v)

    market_tbl = config.get("market", {})
    _check_keys("market", market_tbl, _MARKET_KEYS)
    for k, v in market_tbl.items():
        mkt_changes[k] = int(v) if k == "n_scenarios" else _num("market", k, v)

    base = dict(BASE_VALUES)
    base_tbl = config.get("base", {})
    _check_keys("base", base_tbl, set(BASE_VALUES))
    for k, v in base_tbl.items():
        base[k] = _num("base", k, v)

    return dataclasses.replace(system, **sys_changes), dataclasses.replace(market, **mkt_changes), base
