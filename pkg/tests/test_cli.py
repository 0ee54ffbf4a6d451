"""End-to-end checks of the command-line layer.

Commands run in-process through main(), against a trimmed scenario
(small network, short horizon) written per test session.  Assertions
target the external contract: CSV headers, exit codes, diagnostics
that name the offending field, and byte-identical reruns.
"""

import csv
import json

import pytest

from effcap import (
    ContentionConfig,
    LinkParams,
    Policy,
    effcap_closed_form,
    solve_operating_point,
)
from effcap.cli import main

SCENARIO = {
    "name": "cli-test",
    "mac": {
        "n_laa": 2,
        "m_wifi": 2,
        "policy": "vcw",
        "w0": 16,
        "max_stage": 4,
        "retry_limit": 5,
        "sigma": 9e-6,
        "t_f": 1e-3,
    },
    "link": {"rate_r": 1e7},
    "qos": {"theta_grid": [1e-5, 1e-4], "d_max": 1.0, "p_th": 1e-3},
    "sim": {
        "horizon_slots": 242_000,
        "seed": 9,
        "packet_size": 1e4,
        "arrival_rate": "saturated",
        "block_slots": 2000,
        "warmup_slots": 2000,
    },
    "optimize": {
        "receivers": [
            {"gain_h": 1e-7, "noise_n0": 4e-15, "theta_k": 1e-4,
             "bandwidth_b": 5e6, "power_p": 0.2},
            {"gain_h": 5e-8, "noise_n0": 4e-15, "theta_k": 1e-4,
             "bandwidth_b": 5e6, "power_p": 0.2},
        ],
        "p_total": 0.4,
        "b_total": 1e7,
        "eee": {"p_lo": 0.01, "p_hi": 2.0, "static_offset": 0.5},
    },
    "sweep": {"densities": [1, 4], "area_km2": 1.0},
}


@pytest.fixture(scope="session")
def scenario_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("scenario") / "cli-test.json"
    p.write_text(json.dumps(SCENARIO))
    return p


def rows_of(path):
    with open(path, newline="") as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        return header, list(rdr)


# ---------------------------------------------------------------------------
# happy paths


def test_analyze_record_round_trips(scenario_path, tmp_path, capsys):
    assert main(["analyze", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--json"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["scenario"] == "cli-test"
    assert record["theta"] == 1e-5
    assert record["c_closed"] == pytest.approx(record["c_spectral"], rel=1e-9)
    assert 0.0 < record["p_collision"] < 1.0
    # the same record lands on disk
    on_disk = json.loads((tmp_path / "analyze.json").read_text())
    assert on_disk == record


def test_analyze_theta_flag_overrides_grid(scenario_path, tmp_path, capsys):
    assert main(["analyze", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--theta", "1e-4", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["theta"] == 1e-4


def test_sweep_theta_schema_and_rows(scenario_path, tmp_path):
    assert main(["sweep-theta", "--scenario", str(scenario_path),
                 "--out", str(tmp_path)]) == 0
    header, rows = rows_of(tmp_path / "sweep_theta.csv")
    assert header == ["theta", "policy", "C_analytical", "C_sim", "sim_stderr"]
    assert len(rows) == 4  # 2 thetas x 2 policies
    assert {r[1] for r in rows} == {"fcw", "vcw"}
    assert {float(r[0]) for r in rows} == {1e-5, 1e-4}
    for r in rows:
        c_ana, c_sim = float(r[2]), float(r[3])
        assert c_ana > 0.0 and c_sim > 0.0
    # the sidecar exists even when empty
    assert (tmp_path / "sweep_theta_warnings.txt").exists()


def test_sweep_theta_reruns_are_byte_identical(scenario_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["sweep-theta", "--scenario", str(scenario_path),
                     "--out", str(out), "--seed", "42"]) == 0
    assert (a / "sweep_theta.csv").read_bytes() == (b / "sweep_theta.csv").read_bytes()


def test_csv_floats_round_trip_exactly(scenario_path, tmp_path):
    # cells hold repr() so a parse-and-reformat cycle is lossless
    assert main(["sweep-density", "--scenario", str(scenario_path),
                 "--out", str(tmp_path)]) == 0
    _, rows = rows_of(tmp_path / "sweep_density.csv")
    for r in rows:
        for cell in (r[0], r[2]):
            assert repr(float(cell)) == cell


def test_sweep_density_single_laa_matches_solver(scenario_path, tmp_path):
    assert main(["sweep-density", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--policy", "vcw"]) == 0
    header, rows = rows_of(tmp_path / "sweep_density.csv")
    assert header == ["density", "policy", "total_effcap"]
    one = next(r for r in rows if float(r[0]) == 1.0)
    cfg = ContentionConfig(
        n_laa=1, m_wifi=2, policy=Policy.VCW, w0=16,
        max_stage=4, retry_limit=5, sigma=9e-6, t_f=1e-3)
    link = LinkParams(rate_r=1e7)
    expected = effcap_closed_form(link, cfg, solve_operating_point(cfg), 1e-5).c_theta
    # repr() in the cell means the round trip is exact
    assert float(one[2]) == expected


def test_region_rates_non_increasing_within_policy(scenario_path, tmp_path):
    assert main(["region", "--scenario", str(scenario_path),
                 "--out", str(tmp_path)]) == 0
    header, rows = rows_of(tmp_path / "region.csv")
    assert header == ["rate", "d_max", "policy"]
    for pol in ("fcw", "vcw"):
        rates = [float(r[0]) for r in rows if r[2] == pol]
        assert rates, f"no rows for {pol}"
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        d_maxes = [float(r[1]) for r in rows if r[2] == pol]
        assert all(d > 0.0 for d in d_maxes)


def test_power_opt_optimal_dominates_each_theta(scenario_path, tmp_path):
    assert main(["power-opt", "--scenario", str(scenario_path),
                 "--out", str(tmp_path)]) == 0
    header, rows = rows_of(tmp_path / "power_opt.csv")
    assert header == ["theta", "strategy", "objective"]
    by_theta = {}
    for theta, strat, obj in rows:
        by_theta.setdefault(theta, {})[strat] = float(obj)
    assert len(by_theta) == 2
    for group in by_theta.values():
        assert set(group) == {"optimal", "waterfilling", "inversion"}
        best = group["optimal"]
        assert best >= group["waterfilling"] - 1e-9 * best
        assert best >= group["inversion"] - 1e-9 * best


def test_bandwidth_opt_optimal_dominates_each_theta(scenario_path, tmp_path):
    assert main(["bandwidth-opt", "--scenario", str(scenario_path),
                 "--out", str(tmp_path)]) == 0
    header, rows = rows_of(tmp_path / "bandwidth_opt.csv")
    assert header == ["theta", "strategy", "objective"]
    by_theta = {}
    for theta, strat, obj in rows:
        by_theta.setdefault(theta, {})[strat] = float(obj)
    for group in by_theta.values():
        assert set(group) == {"optimal", "optimal_rate", "equal"}
        best = group["optimal"]
        assert best >= group["optimal_rate"] - 1e-9 * best
        assert best >= group["equal"] - 1e-9 * best


def test_eee_reports_interior_optimum(scenario_path, tmp_path, capsys):
    assert main(["eee", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--json"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["p_lo"] < record["p_star"] < record["p_hi"]
    assert record["eee_star"] > 0.0


def test_admit_accepts_modest_demand(scenario_path, tmp_path, capsys):
    assert main(["admit", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--json",
                 "--rate", "1e5", "--d-max", "1.0", "--p-th", "1e-3"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["accepted"] is True
    assert record["margin"] > 0.0
    assert record["boundary_rate"] == pytest.approx(
        record["margin"] + 1e5, rel=1e-12)


def test_admit_rejects_demand_beyond_capacity(scenario_path, tmp_path, capsys):
    assert main(["admit", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--json",
                 "--rate", "1e9", "--d-max", "1.0", "--p-th", "1e-3"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["accepted"] is False
    assert record["margin"] < 0.0


def test_simulate_trace_schema(scenario_path, tmp_path):
    assert main(["simulate", "--scenario", str(scenario_path),
                 "--out", str(tmp_path)]) == 0
    header, rows = rows_of(tmp_path / "simulate.csv")
    assert header == ["packet_id", "arrival_s", "departure_s",
                      "attempts", "outcome"]
    assert rows
    for r in rows:
        assert float(r[2]) >= float(r[1])  # departs after it arrives
        assert int(r[3]) >= 1
        assert r[4] in ("delivered", "dropped")
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert summary["seed"] == 9
    assert summary["throughput_bps"] > 0.0


def test_policy_flag_restricts_rows(scenario_path, tmp_path):
    assert main(["sweep-density", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--policy", "fcw"]) == 0
    _, rows = rows_of(tmp_path / "sweep_density.csv")
    assert {r[1] for r in rows} == {"fcw"}


def test_default_scenario_is_loadable(tmp_path, capsys):
    # no --scenario: the packaged example must parse and analyze
    assert main(["analyze", "--out", str(tmp_path), "--json"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["scenario"] == "laa-coexistence-default"


# ---------------------------------------------------------------------------
# failure paths: exit 2 for bad input, message names the field


def write_doc(tmp_path, mutate):
    doc = json.loads(json.dumps(SCENARIO))
    mutate(doc)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    return p


def test_unknown_key_is_rejected(tmp_path, capsys):
    def mutate(doc):
        doc["mac"]["bogus_knob"] = 1
    p = write_doc(tmp_path, mutate)
    assert main(["analyze", "--scenario", str(p), "--out", str(tmp_path)]) == 2
    assert "mac.bogus_knob" in capsys.readouterr().err


def test_bad_policy_names_the_field(tmp_path, capsys):
    def mutate(doc):
        doc["mac"]["policy"] = "tdma"
    p = write_doc(tmp_path, mutate)
    assert main(["analyze", "--scenario", str(p), "--out", str(tmp_path)]) == 2
    assert "mac.policy" in capsys.readouterr().err


def test_unsorted_theta_grid_names_the_field(tmp_path, capsys):
    def mutate(doc):
        doc["qos"]["theta_grid"] = [1e-4, 1e-5]
    p = write_doc(tmp_path, mutate)
    assert main(["analyze", "--scenario", str(p), "--out", str(tmp_path)]) == 2
    assert "qos.theta_grid" in capsys.readouterr().err


def test_missing_section_exits_2(tmp_path, capsys):
    def mutate(doc):
        del doc["sweep"]
    p = write_doc(tmp_path, mutate)
    assert main(["sweep-density", "--scenario", str(p),
                 "--out", str(tmp_path)]) == 2
    assert "sweep" in capsys.readouterr().err


def test_not_json_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("not json")
    assert main(["analyze", "--scenario", str(p), "--out", str(tmp_path)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["analyze", "--scenario", str(tmp_path / "absent.json"),
                 "--out", str(tmp_path)]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_negative_theta_flag_exits_2(scenario_path, tmp_path, capsys):
    assert main(["analyze", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--theta", "-1"]) == 2
    assert "--theta" in capsys.readouterr().err


def test_admit_garbled_current_list_exits_2(scenario_path, tmp_path, capsys):
    assert main(["admit", "--scenario", str(scenario_path),
                 "--out", str(tmp_path), "--rate", "1e5", "--d-max", "1.0",
                 "--p-th", "1e-3", "--current", "1e5,oops"]) == 2
    assert "oops" in capsys.readouterr().err
