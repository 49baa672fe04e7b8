import csv
import io
import json

import pytest

from kinesim import cli
from kinesim.config import PRESETS, RunConfig, all_keys, preset_path, resolve_key
from kinesim.errors import ConfigError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# --- config ------------------------------------------------------------------

@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = RunConfig.load(name)
    assert preset_path(name).exists()
    cfg.deployment_config()


def test_resolve_key():
    assert resolve_key("wake_threshold") == ("powerpath", "wake_threshold")
    assert resolve_key("sizing.cap_rating") == ("sizing", "cap_rating")
    with pytest.raises(ConfigError, match="ambiguous"):
        resolve_key("cap_rating")
    with pytest.raises(ConfigError):
        resolve_key("nonsense")


def test_unknown_block_rejected(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("[bogus]\na = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_missing_referenced_file(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("[drivetrain]\ncatalog = nowhere.csv\ngenerator = x\n")
    with pytest.raises(ConfigError, match="missing file"):
        RunConfig.load(p)


def test_relative_catalog_resolves_next_to_config(tmp_path):
    (tmp_path / "gens.csv").write_text("name,rated_voltage,ke_mV_per_rpm,r_internal_ohm\nm1,24,5.0,8\n")
    p = tmp_path / "x.cfg"
    p.write_text("[drivetrain]\ncatalog = gens.csv\ngenerator = m1\n")
    gen = RunConfig.load(p).generator()
    assert gen.ke == pytest.approx(5e-3) and gen.r_internal == 8


def test_override_validation():
    with pytest.raises(ConfigError):
        RunConfig.load("paper-bin.cfg", ["wake_threshold=40"])
    with pytest.raises(ConfigError):
        RunConfig.load("paper-bin.cfg", ["wake_threshold"])


# --- size --------------------------------------------------------------------

def test_size_bin_preset(capsys):
    code, out, err = run(capsys, "size", "paper-bin.cfg")
    assert code == 0
    doc = json.loads(out)
    assert doc["gear_ratio"] == pytest.approx(42.6, rel=0.005)
    assert doc["capacitance_F"] == pytest.approx(1000e-6)
    assert 11.45 <= doc["wake_threshold_V"] <= 11.5
    assert "wake threshold" in err


def test_size_zero_window_is_usage_error(capsys):
    code, _, err = run(capsys, "size", "paper-bin.cfg", "-O", "harvest_window=0")
    assert code == 2 and "harvest_window" in err


def test_size_smaller_energy_lower_threshold(capsys):
    _, out_bin, _ = run(capsys, "size", "paper-bin.cfg")
    code, out_small, _ = run(capsys, "size", "paper-bin.cfg", "--override", "transaction_energy=4e-3")
    assert code == 0
    assert json.loads(out_small)["wake_threshold_V"] <= json.loads(out_bin)["wake_threshold_V"]


def test_size_infeasible(capsys):
    code, _, err = run(capsys, "size", "paper-bin.cfg", "-O", "headroom_fraction=0.12")
    assert code == 3 and "infeasible" in err


def test_size_needs_block(capsys, tmp_path):
    p = tmp_path / "nosize.cfg"
    p.write_text("[sim]\nevents = 10\n")
    code, _, err = run(capsys, "size", p)
    assert code == 2 and "sizing" in err


def test_size_writes_file(capsys, tmp_path):
    code, out, _ = run(capsys, "size", "paper-bin.cfg", "--out-dir", tmp_path, "--prefix", "z")
    assert code == 0
    assert json.loads((tmp_path / "z-size.json").read_text()) == json.loads(out)


# --- simulate ----------------------------------------------------------------

def test_simulate_writes_reports(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "paper-bin.cfg", "--events", 200, "--out-dir", tmp_path)
    assert code == 0
    assert out.startswith("events=200 delivered=") and out.strip().endswith("%")
    doc = json.loads((tmp_path / "bin.json").read_text())
    assert doc["totals"]["actuations"] == 200
    rows = list(csv.DictReader(io.StringIO((tmp_path / "bin.csv").read_text())))
    assert rows[-1]["label"] == "Total" and int(rows[-1]["actuations"]) == 200
    assert "Success %" in (tmp_path / "bin.txt").read_text()


def test_simulate_deterministic_files(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "simulate", "paper-bin.cfg", "--events", 1, "--seed", 123, "--per-event", "--out-dir", tmp_path / d)[0] == 0
    for ext in ("json", "csv", "txt"):
        assert (tmp_path / "a" / f"bin.{ext}").read_bytes() == (tmp_path / "b" / f"bin.{ext}").read_bytes()


def test_seed_fallback_env(capsys, tmp_path, monkeypatch):
    p = tmp_path / "noseed.cfg"
    p.write_text("[sim]\nevents = 5\n")
    monkeypatch.setenv("KINESIM_SEED", "42")
    run(capsys, "simulate", p, "--out-dir", tmp_path)
    assert json.loads((tmp_path / "report.json").read_text())["seed"] == 42
    run(capsys, "simulate", p, "--out-dir", tmp_path, "--seed", 5)
    assert json.loads((tmp_path / "report.json").read_text())["seed"] == 5
    # a seed set in the config beats the environment
    run(capsys, "simulate", "paper-bin.cfg", "--events", 3, "--out-dir", tmp_path)
    assert json.loads((tmp_path / "bin.json").read_text())["seed"] == 7


def test_simulate_io_error(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "simulate", "paper-bin.cfg", "--events", 2, "--out-dir", blocker / "sub")
    assert code == 4 and "I/O" in err


def test_missing_config_is_io_error(capsys, tmp_path):
    assert run(capsys, "simulate", tmp_path / "absent.cfg")[0] == 4


# --- replay ------------------------------------------------------------------

def test_replay_synthesized_trace(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    code, _, _ = run(capsys, "synth-trace", "paper-bin.cfg", "--events", 20, "--rate", 250, "--no-partials", "-o", trace)
    assert code == 0
    code, out, _ = run(capsys, "replay", "paper-bin.cfg", trace, "-O", "channel_loss_probability=0", "--out-dir", tmp_path)
    assert code == 0
    assert out.startswith("events=20 delivered=20 ")


def test_replay_empty_trace(capsys, tmp_path):
    trace = tmp_path / "empty.csv"
    trace.write_text("timestamp_ms,angle_deg,limit_switch\n")
    code, _, err = run(capsys, "replay", "paper-bin.cfg", trace, "--out-dir", tmp_path)
    assert code == 5


def test_replay_corrupted_row(capsys, tmp_path):
    trace = tmp_path / "bad.csv"
    trace.write_text("timestamp_ms,angle_deg,limit_switch\n0,0,1\n1,0.5,0\n2,zz,0\n")
    code, _, err = run(capsys, "replay", "paper-bin.cfg", trace, "--out-dir", tmp_path)
    assert code == 5 and "line 4" in err


# --- toa ---------------------------------------------------------------------

def test_toa_sf10(capsys):
    code, out, _ = run(capsys, "toa", "--sf", 10, "--bw", 125000, "--cr", 8, "--pl", 8, "--preamble", 8, "--crc", "--explicit")
    assert code == 0 and out.strip() == "toa_ms=296.960"


def test_toa_sf6(capsys):
    code, out, _ = run(capsys, "toa", "--sf", 6, "--implicit", "--pl", 4, "--crc")
    assert code == 0 and out.strip() == "toa_ms=18.560"


def test_toa_energy(capsys):
    _, out, _ = run(capsys, "toa", "--sf", 10, "--pl", 8, "--explicit", "--tx-target-mj", 57.5)
    assert "tx_energy_mJ=57.500" in out
    _, out, _ = run(capsys, "toa", "--sf", 6, "--implicit", "--pl", 4, "--tx-power-w", 0.193629)
    assert "tx_energy_mJ=3.594" in out


def test_toa_sf6_explicit_usage_error(capsys):
    code, _, err = run(capsys, "toa", "--sf", 6, "--explicit")
    assert code == 2 and "implicit" in err


# --- sweep -------------------------------------------------------------------

def _sweep_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_threshold_nonincreasing(capsys):
    code, out, _ = run(capsys, "sweep", "paper-bin.cfg", "--param", "wake_threshold", "--from", 9, "--to", 14,
                       "--steps", 6, "--events", 1200, "--jobs", 2)
    assert code == 0
    rows = _sweep_rows(out)
    assert [float(r["value"]) for r in rows] == [9, 10, 11, 12, 13, 14]
    rates = [float(r["success_rate"]) for r in rows]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_sweep_ratio_no_charge_nonincreasing(capsys):
    code, out, _ = run(capsys, "sweep", "paper-bin.cfg", "--param", "drivetrain.ratio", "--from", 20, "--to", 60,
                       "--steps", 5, "--events", 1200, "--jobs", 2)
    assert code == 0
    counts = [int(r["no_charge"]) for r in _sweep_rows(out)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_sweep_single_step_matches_simulate(capsys, tmp_path):
    _, out, _ = run(capsys, "sweep", "paper-bin.cfg", "--param", "wake_threshold", "--from", 12, "--to", 12,
                    "--steps", 1, "--events", 300)
    rows = _sweep_rows(out)
    assert len(rows) == 1
    run(capsys, "simulate", "paper-bin.cfg", "-O", "wake_threshold=12", "--events", 300, "--out-dir", tmp_path)
    doc = json.loads((tmp_path / "bin.json").read_text())
    assert float(rows[0]["success_rate"]) == pytest.approx(doc["success_rate"], abs=1e-6)
    assert int(rows[0]["no_charge"]) == doc["outcome_counts"]["no_charge"]


def test_sweep_unknown_key(capsys):
    code, _, err = run(capsys, "sweep", "paper-bin.cfg", "--param", "warp_factor", "--from", 1, "--to", 2)
    assert code == 2
    assert "powerpath.wake_threshold" in err


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--help"])
    out = capsys.readouterr().out
    for key in all_keys():
        assert key in out


def test_calibrate_reports_efficiency_floor(capsys):
    code, out, _ = run(capsys, "calibrate", "paper-bin.cfg")
    assert code == 0
    doc = json.loads(out)
    assert 0 < doc["min_coupling_efficiency"] <= doc["coupling_efficiency"]
