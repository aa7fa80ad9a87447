import math

import pytest

from cooptlab import harness
from cooptlab.harness import CSV_COLUMNS, ExperimentPlan, Task, emit, my_sweep, read_csv, run_sweep, to_csv
from cooptlab.presets import ConfigError, apply_overrides, builtin_presets, load_config, market_preset, system_preset


# --- presets and config ---------------------------------------------------------

def test_builtin_presets():
    systems, markets = builtin_presets()
    assert sorted(systems) == ["HH", "HL", "LL", "VLH", "VLL"]
    assert len(markets) == 8
    assert systems["HH"].dispatchable_capacity == pytest.approx(28503.93, abs=1e-6)
    assert systems["LL"].dispatchable_capacity == pytest.approx(25356.29, abs=1e-6)
    assert systems["VLL"].dispatchable_capacity == pytest.approx(23356.29, abs=1e-6)
    assert systems["LL"].wind_capacity == 22573.00
    assert (systems["HH"].lam, systems["HL"].lam, systems["VLH"].lam) == (0.0, 1.0, 0.0)
    r = markets["RiskH"]
    assert (r.psi, r.mu, r.fip, r.my) == (1.0, 0.2383, 30.0, 0.15)
    assert (markets["ResH"].fip, markets["ResH"].my) == (80.0, 0.60)


def test_unknown_preset():
    with pytest.raises(KeyError):
        system_preset("XX")
    with pytest.raises(ValueError):
        ExperimentPlan(tasks=[Task("LL", "Nope", "COM")])


def test_config_overlay(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[market]\nmy = 0.3\nn_scenarios = 6\n[generators.1]\ncost = 50.0\n"
                    "[base]\nprice = 100.0\n")
    sys, mkt, base = apply_overrides(system_preset("LL"), market_preset("FiPL"), load_config(path))
    assert mkt.my == 0.3 and mkt.n_scenarios == 6
    assert sys.generators[0].cost == 50.0 and sys.generators[1].cost == 43.88
    assert base["price"] == 100.0 and base["demand"] == 30120.39


@pytest.mark.parametrize("text", ["[market]\nmy = 'high'\n", "[bogus]\nx = 1\n", "[market]\nfoo = 1\n",
                                  "not toml ["])
def test_config_errors(tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        apply_overrides(system_preset("LL"), market_preset("FiPL"), load_config(path))


# --- sweeps ---------------------------------------------------------------------

def test_single_triple_plan():
    rows = run_sweep(ExperimentPlan(tasks=[Task("LL", "WindL", "COM")], parallelism=1))
    assert len(rows) == 1 and rows[0].status == "optimal"
    assert rows[0].wall_ms is None


def test_full_sweep_rows(full_sweep):
    rows = full_sweep.rows
    assert len(rows) == 80
    assert [(r.system, r.market, r.model) for r in rows] == [
        (t.system, t.market, t.model) for t in ExperimentPlan.full().tasks]
    assert all(r.status == "optimal" for r in rows if r.model == "COM")
    assert all(r.metrics is not None for r in rows if r.status == "optimal")
    assert len(full_sweep.svgs) == 5


def test_parallel_matches_serial(tmp_path):
    def run(par, sub):
        out = tmp_path / sub
        out.mkdir()
        plan = ExperimentPlan.full(systems=["LL", "HL"], markets=["WindL", "RiskH"], parallelism=par,
                                   csv_path=out / "r.csv", json_path=out / "r.json")
        run_sweep(plan)
        return (out / "r.csv").read_bytes(), (out / "r.json").read_bytes()

    assert run(4, "p4") == run(1, "p1")


def test_my_sweep_com_has_no_jumps():
    res = my_sweep("HL", "FiPL", 0.15, 0.60, 10, model="COM")
    assert all(r.status == "optimal" for r in res.rows)
    assert res.jumps == ()


def test_my_sweep_two_points():
    res = my_sweep("LL", "FiPL", 0.15, 0.60, 2, model="COM")
    assert len(res.rows) == 2
    assert res.median_step is None
    assert "insufficient" in res.report()


def test_my_sweep_eqm_report():
    res = my_sweep("HL", "FiPL", 0.15, 0.60, 46)
    assert len(res.rows) == 46
    assert res.rows[0].my == pytest.approx(0.15) and res.rows[-1].my == pytest.approx(0.60)
    text = res.report()
    assert text.startswith("46 grid points")
    assert "median step" in text
    for lo, hi, change in res.jumps:
        assert lo < hi and change > 0
        assert f"jump between My = {lo:.6g}" in text


def test_my_sweep_validation():
    with pytest.raises(ValueError):
        my_sweep("HL", "FiPL", 0.6, 0.15, 5)
    with pytest.raises(ValueError):
        my_sweep("HL", "FiPL", 0.15, 0.6, 1)


# --- emission -------------------------------------------------------------------

def test_emit_empty_csv(tmp_path):
    (path,) = emit([], "csv", tmp_path / "e.csv")
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_emit_one_row(tmp_path):
    rows = run_sweep(ExperimentPlan(tasks=[Task("HH", "WindH", "COM")], parallelism=1))
    (path,) = emit(rows, "csv", tmp_path / "one.csv")
    assert len(path.read_text().splitlines()) == 2
    with pytest.raises(ValueError):
        emit(rows, "xml", tmp_path / "x")
    with pytest.raises(ValueError):
        emit([], "svg", tmp_path / "svg")


def test_csv_round_trip(full_sweep, tmp_path):
    path = tmp_path / "r.csv"
    path.write_bytes(full_sweep.csv)
    back = read_csv(path)
    assert len(back) == 80
    for row, rec in zip(full_sweep.rows, back):
        for key, value in row.as_dict().items():
            if isinstance(value, str):
                assert rec[key] == value
            elif value is None:
                assert rec[key] is None
            elif math.isfinite(value):
                assert abs(rec[key] - value) <= 1e-9 * max(1.0, abs(value))


def test_csv_schema():
    assert to_csv([]).strip().split(",") == [
        "config_system", "config_market", "model", "my", "psi", "fip", "mu", "demand_MWh",
        "price_eur_MWh", "gross_welfare_eur", "net_welfare_eur", "consumer_payment_eur",
        "reserve_capacity_payment_eur", "pct_demand", "pct_price", "pct_gross", "pct_net",
        "pct_consumer", "pct_reserve", "status", "iterations", "residual", "wall_ms"]
    assert harness.MODELS == ("COM", "EQM")
