"""Shared fixtures: preset pairs and session-wide caches of expensive solves."""

from __future__ import annotations

import dataclasses
import functools
import time

import pytest

from cooptlab import harness
from cooptlab.presets import MARKET_PRESETS, SYSTEM_PRESETS, market_preset, system_preset
from cooptlab.scenarios import build_scenarios
from cooptlab.solvers.equilibrium import solve_com, solve_com_via_mcp, solve_eqm

PAIRS = [(s, m) for s in SYSTEM_PRESETS for m in MARKET_PRESETS]

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def case(system: str, market: str, psi: float | None = None):
    sys = system_preset(system)
    mkt = market_preset(market)
    if psi is not None:
        mkt = dataclasses.replace(mkt, psi=psi)
    return sys, mkt, build_scenarios(mkt.mu, n=mkt.n_scenarios)


@functools.lru_cache(maxsize=None)
def com(system: str, market: str, psi: float | None = None):
    return solve_com(*case(system, market, psi))


@functools.lru_cache(maxsize=None)
def com_mcp(system: str, market: str):
    return solve_com_via_mcp(*case(system, market))


@functools.lru_cache(maxsize=None)
def eqm(system: str, market: str, t: float = 0.0, psi: float | None = None):
    return solve_eqm(*case(system, market, psi), t=t)


@dataclasses.dataclass
class SweepRun:
    rows: list
    seconds: float
    csv: bytes
    json: bytes
    svgs: dict


@functools.lru_cache(maxsize=None)
def _sweep(out_dir: str, parallelism: int) -> SweepRun:
    from pathlib import Path

    out = Path(out_dir)
    plan = harness.ExperimentPlan.full(csv_path=out / "results.csv", json_path=out / "results.json",
                                       svg_dir=out / "svg", parallelism=parallelism)
    t0 = time.perf_counter()
    rows = harness.run_sweep(plan)
    seconds = time.perf_counter() - t0
    svgs = {p.name: p.read_bytes() for p in sorted((out / "svg").glob("*.svg"))}
    return SweepRun(rows, seconds, (out / "results.csv").read_bytes(),
                    (out / "results.json").read_bytes(), svgs)


@pytest.fixture(scope="session")
def full_sweep(tmp_path_factory) -> SweepRun:
    """The default 80-solve sweep at default parallelism, timed."""
    return _sweep(str(tmp_path_factory.mktemp("sweep_default")), 0)


@pytest.fixture(scope="session")
def full_sweep_serial(tmp_path_factory) -> SweepRun:
    return _sweep(str(tmp_path_factory.mktemp("sweep_serial")), 1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
