"""CLI contract tests: subcommands, config handling, exit codes, CSV
round-trips."""

import math

import numpy as np
import pytest

from siq.cli import (build_scenario, critical_rows, i_peak, main,
                     parse_config_file, read_csv)
from siq.errors import ConfigError, HorizonTooShort
from siq.siq_model import ModelParams, load_disease_table, outbreak_history, simulate


# ---------------------------------------------------------------------------
# critical-threshold table
# ---------------------------------------------------------------------------

def test_critical_rows_reproduce_reference_table():
    rows = {name: (pc, tc, flag)
            for name, pc, _, tc, flag in critical_rows(load_disease_table(), 0.8)}
    expected = {
        "H1N1 2016 [Brazil]": (0.41, 4.7),
        "Ebola 2014 [Guin./Lib.]": (0.33, 10.5),
        "Ebola 2014 [Sierra Leone]": (0.6, 3.5),
        "Spanish Flu 1917": (0.5, 3.3),
        "Hepatitis A": (0.56, 4.89),
        "Pertussis": (0.79, 0.91),
    }
    for name, (pc_ref, tc_ref) in expected.items():
        pc, tc, flag = rows[name]
        assert pc == pytest.approx(pc_ref, abs=0.01)
        assert tc == pytest.approx(tc_ref, abs=0.1)
        assert flag == ""
    for name in ("Influenza A", "SARS", "Smallpox"):
        assert "tc-mismatch" in rows[name][2]


def test_critical_rows_uncontrollable_flag():
    rows = critical_rows(load_disease_table(), 0.5)
    by_name = {r[0]: r for r in rows}
    assert "uncontrollable" in by_name["Pertussis"][4]       # p_c = 0.79
    assert by_name["Ebola 2014 [Guin./Lib.]"][4] == ""        # p_c = 0.33
    assert math.isnan(by_name["Pertussis"][3])


def test_cli_critical_roundtrip(tmp_path, capsys):
    out = tmp_path / "crit.csv"
    assert main(["critical", "--p", "0.8", "--out", str(out)]) == 0
    meta, cols, rows = read_csv(str(out))
    assert cols == ["name", "p_c", "tau_c", "T_c_days", "flag"]
    assert meta["p"] == "0.8"
    assert len(rows) == 9
    flagged = [r[0] for r in rows if "tc-mismatch" in r[4]]
    assert flagged == ["Influenza A", "SARS", "Smallpox"]


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------

def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("r = 2.5\np = 0.5\ntau = 0.5\nkappa = 0.5\n"
                   "i0 = 0.001\nt_end = 10\n")
    values = parse_config_file(str(cfg))
    assert values["r"] == "2.5"

    bad = tmp_path / "bad.cfg"
    bad.write_text("r = 2.5\nbogus = 1\n")
    with pytest.raises(ConfigError) as err:
        parse_config_file(str(bad))
    assert "bogus" in str(err.value)


def test_cli_flag_overrides_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("r = 2.5\np = 0.5\ntau = 0.5\nkappa = 0.5\n")

    class Args:
        config = str(cfg)
        r = None
        p = "0.7"
        tau = None
        kappa = None
        sigma = None
        i0 = None
        q0 = None
        e0 = None
        t_end = None
        step = None
        out = None

    sc = build_scenario(Args())
    assert sc.params.p == 0.7
    assert sc.params.r == 2.5


def test_cli_missing_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("r = 2.5\n")
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "missing required config key" in capsys.readouterr().err


def test_cli_unknown_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("r = 2.5\nwibble = 3\n")
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "wibble" in capsys.readouterr().err


def test_cli_usage_error_exit_code(capsys):
    assert main(["critical"]) == 1       # missing --p


# ---------------------------------------------------------------------------
# simulate / endemic / spectrum artifacts
# ---------------------------------------------------------------------------

def test_cli_simulate_artifact(tmp_path):
    out = tmp_path / "traj.csv"
    code = main(["simulate", "--r", "2.5", "--p", "0", "--tau", "0",
                 "--kappa", "0", "--i0", "0.001", "--t-end", "150",
                 "--out", str(out)])
    assert code == 0
    meta, cols, rows = read_csv(str(out))
    assert cols == ["t", "S", "I", "Q"]
    assert float(meta["H"]) == pytest.approx(0.0, abs=1e-12)   # kappa = 0: H = q0
    final = [float(v) for v in rows[-1]]
    assert final[0] == pytest.approx(150.0, abs=1e-9)
    # SIS limit: I -> 1 - 1/r = 0.6
    assert final[2] == pytest.approx(0.6, abs=1e-4)


def test_cli_simulate_metadata_predicts_endemic(tmp_path):
    out = tmp_path / "traj.csv"
    main(["simulate", "--r", "2.5", "--p", "0.5", "--tau", "0.5",
          "--kappa", "0.5", "--i0", "0.001", "--t-end", "5",
          "--out", str(out)])
    meta, _, _ = read_csv(str(out))
    assert float(meta["leaf_q"]) == pytest.approx(0.001, abs=1e-12)
    assert float(meta["predicted_v_I"]) == pytest.approx(0.348950, abs=1e-5)
    assert meta["reachable"] == "True"
    for key in ("r", "p", "tau", "kappa", "sigma", "eps", "step", "version"):
        assert key in meta


def test_cli_endemic_value(tmp_path):
    out = tmp_path / "endemic.csv"
    code = main(["endemic", "--r", "2.5", "--p", "0.5", "--tau", "0",
                 "--kappa", "1", "--q", "0", "--out", str(out)])
    assert code == 0
    _, cols, rows = read_csv(str(out))
    v_i = float(rows[0][cols.index("v_I")])
    assert v_i == pytest.approx(0.1, rel=1e-12)    # 0.2/(1 + kappa) at kappa=1


def test_cli_spectrum_controllable_case(tmp_path):
    out = tmp_path / "spec.csv"
    code = main(["spectrum", "--r", "2.5", "--p", "0.8", "--tau", "0.1",
                 "--kappa", "1", "--q", "0", "--out", str(out)])
    assert code == 0
    meta, _, rows = read_csv(str(out))
    # eps = 0.724 > p_c = 0.6: controllable, count 0 even at q = 0
    assert meta["unstable_count"] == "0"
    assert rows == []


def test_cli_stability_map_small(tmp_path):
    out = tmp_path / "map.csv"
    code = main(["stability-map", "--r", "2.5", "--p", "0.5", "--tau", "0",
                 "--q-steps", "2", "--q-max", "0.1", "--kappa-min", "0.5",
                 "--kappa-max", "12.5", "--kappa-steps", "3",
                 "--threads", "2", "--out", str(out)])
    assert code == 0
    meta, cols, rows = read_csv(str(out))
    assert cols == ["q", "kappa", "unstable_count"]
    assert len(rows) == 6
    grid = {(float(r[0]), float(r[1])): int(r[2]) for r in rows}
    assert grid[(0.0, 0.5)] == 0
    assert grid[(0.0, 12.5)] == 2


def test_cli_hopf(tmp_path):
    out = tmp_path / "hopf.csv"
    code = main(["hopf", "--r", "2.5", "--p", "0.5", "--tau", "0",
                 "--q", "0", "--kappa-max", "12", "--m-max", "2",
                 "--out", str(out)])
    assert code == 0
    meta, _, rows = read_csv(str(out))
    assert meta["found"] == "True"
    k0 = float(meta["kappa_0"])
    omega = float(meta["omega"])
    assert k0 == pytest.approx(8.948101, abs=1e-3)
    assert len(rows) == 3
    assert float(rows[1][1]) - float(rows[0][1]) == pytest.approx(
        2 * math.pi / omega, rel=1e-7)    # 9-significant-digit round trip


# ---------------------------------------------------------------------------
# I_peak
# ---------------------------------------------------------------------------

def test_i_peak_subcritical_equals_i0():
    # monotone-decreasing case: tau = 0 so removal acts from the start and
    # (1-p) r < 1 makes I' < 0 everywhere; the peak is i0 itself
    ps = ModelParams(r=2.5, p=0.9, tau=0.0, kappa=1.0)
    traj = simulate(ps, outbreak_history(ps, 0.01), 80.0, 1e-3)
    assert i_peak(traj) == pytest.approx(0.01, abs=1e-9)


def test_i_peak_horizon_guard():
    ps = ModelParams(r=2.5, p=0.5, tau=0.5, kappa=0.5)
    traj = simulate(ps, outbreak_history(ps, 0.001), 10.0, 1e-3)
    with pytest.raises(HorizonTooShort):
        i_peak(traj, settle=50.0)


def test_cli_ipeak(tmp_path):
    out = tmp_path / "peaks.csv"
    code = main(["ipeak", "--r", "2.5", "--p", "0.5", "--tau", "0.5",
                 "--i0", "0.001", "--t-end", "100", "--kappa", "0",
                 "--kappas", "5,10,inf", "--out", str(out)])
    assert code == 0
    _, cols, rows = read_csv(str(out))
    assert cols == ["kappa", "I_peak"]
    peaks = {r[0]: float(r[1]) for r in rows}
    assert peaks["5"] >= peaks["10"] >= peaks["inf"] - 1e-9


# ---------------------------------------------------------------------------
# network artifact
# ---------------------------------------------------------------------------

def test_cli_network_small(tmp_path):
    out = tmp_path / "net.csv"
    code = main(["network", "--n", "300", "--mean-degree", "6",
                 "--beta", "0.3", "--gamma", "1", "--p", "0.5",
                 "--tau-days", "0.5", "--kappa-days", "2",
                 "--t-end-days", "5", "--seeds", "2", "--i0-frac", "0.02",
                 "--out", str(out)])
    assert code == 0
    meta, cols, rows = read_csv(str(out))
    assert cols == ["t_days", "S_frac", "I_frac", "Q_frac"]
    assert meta["seeds"] == "2"
    for key in ("version", "base_seed", "net_seed", "n", "mean_degree",
                "beta", "gamma", "p", "tau_days", "kappa_days"):
        assert key in meta
    total = [sum(float(v) for v in r[1:]) for r in rows]
    assert np.allclose(total, 1.0, atol=1e-9)
