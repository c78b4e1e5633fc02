import hashlib
import json

import pytest

from coalflow.cli import (
    SCHEMAS,
    UsageError,
    _normalize_argv,
    _parse_value,
    _read_config_file,
    main,
)


def run(*argv):
    return main(list(argv))


# ---------------------------------------------------------------------------
# value parsing and config files
# ---------------------------------------------------------------------------


def test_parse_value_kinds():
    assert _parse_value("simulate", "seed", "7") == 7
    assert _parse_value("simulate", "dt", "0.5") == 0.5
    assert _parse_value("simulate", "starts", "-1, 0,2.5") == (-1.0, 0.0, 2.5)
    assert _parse_value("verify", "criteria", "1,3") == (1, 3)
    assert _parse_value("verify", "quick", "true") is True
    assert _parse_value("verify", "quick", "off") is False
    with pytest.raises(UsageError, match="bad value"):
        _parse_value("simulate", "dt", "fast")
    with pytest.raises(UsageError, match="bad value"):
        _parse_value("verify", "quick", "maybe")


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a comment\n\nseed = 3\nstarts = 0,0.5,1  # inline comment\n")
    out = _read_config_file("simulate", str(cfg))
    assert out == {"seed": 3, "starts": (0.0, 0.5, 1.0)}


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sede = 3\n")
    with pytest.raises(UsageError, match="unknown key 'sede'"):
        _read_config_file("simulate", str(cfg))


def test_config_file_missing(tmp_path):
    with pytest.raises(UsageError, match="cannot read"):
        _read_config_file("simulate", str(tmp_path / "nope.cfg"))


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dt = 0.02\nreplicates = 2\nwindow = 1.0\n")
    out = tmp_path / "o"
    rc = run("simulate", "--config", str(cfg), "--dt", "0.05", "--out", str(out))
    assert rc == 0
    text = (out / "resolved_config.txt").read_text()
    assert "dt = 0.05" in text          # flag wins
    assert "replicates = 2" in text     # config file beats the default
    assert "window = 1.0" in text


def test_normalize_argv_negative_lists():
    argv = ["dual", "--forward-starts", "-1,0,1", "--x-min", "-3", "--out", "d"]
    fixed = _normalize_argv(argv)
    assert "--forward-starts=-1,0,1" in fixed
    assert "--x-min=-3" in fixed
    assert fixed[-2:] == ["--out", "d"]


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_usage_exit_codes(tmp_path, capsys):
    assert run("no-such-command") == 2
    assert run() == 2
    assert run("--help") == 0
    assert run("--version") == 0
    capsys.readouterr()
    # bad parameter values are usage errors, not crashes
    assert run("simulate", "--dt", "fast", "--out", str(tmp_path / "a")) == 2
    assert run("simulate", "--drift", "cubic:1", "--out", str(tmp_path / "b")) == 2
    assert run("simulate", "--starts", "1,0", "--out", str(tmp_path / "c")) == 2
    assert run("meeting", "--starts", "0,1,2", "--out", str(tmp_path / "d")) == 2
    assert run("meeting", "--refine", "-1", "--out", str(tmp_path / "e")) == 2
    assert run("pullback", "--h", "-1", "--out", str(tmp_path / "f")) == 2
    assert run("verify", "--criteria", "1,42", "--out", str(tmp_path / "g")) == 2
    assert run("verify", "--fault", "bogus", "--out", str(tmp_path / "h")) == 2
    assert "usage error" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("vindow = 4\n")
    assert run("simulate", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2
    assert "known keys" in capsys.readouterr().err


def test_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("simulate", "--window", "0.5") == 0
    assert (tmp_path / "out_simulate" / "trajectories_r0.csv").exists()


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_outputs_and_determinism(tmp_path, capsys):
    args = ("simulate", "--drift", "linear:-1", "--seed", "5", "--window", "2",
            "--starts", "0,0.2,1")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(*args, "--out", str(a)) == 0
    assert run(*args, "--out", str(b)) == 0
    assert "simulate:" in capsys.readouterr().out
    for name in ("trajectories_r0.csv", "events_r0.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    assert run(*args[:4], "7", *args[5:], "--out", str(c)) == 0
    assert (a / "trajectories_r0.csv").read_bytes() != (c / "trajectories_r0.csv").read_bytes()


def test_simulate_manifest_hashes(tmp_path):
    out = tmp_path / "o"
    assert run("simulate", "--window", "1", "--replicates", "2", "--out", str(out)) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["config"]["replicates"] == 2
    listed = set(manifest["files"])
    on_disk = {p.name for p in out.iterdir() if p.name != "manifest.json"}
    assert listed == on_disk
    assert "trajectories_r1.csv" in listed
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_resolved_config_excludes_out_path(tmp_path):
    out = tmp_path / "deeply" / "nested" / "run"
    assert run("simulate", "--window", "0.5", "--out", str(out)) == 0
    text = (out / "resolved_config.txt").read_text()
    assert "nested" not in text
    # byte-identical runs must stay byte-identical whatever --out was
    manifest = (out / "manifest.json").read_text()
    assert "nested" not in manifest


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------


def test_pullback_report(tmp_path):
    out = tmp_path / "o"
    rc = run("pullback", "--replicates", "2", "--out", str(out))
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["realizations"] == 2
    assert report["summary"]["stabilized_fraction"] == 1.0
    assert report["summary"]["eta_variance"] is not None
    for rec in report["realizations"]:
        assert rec["stabilized"] is True
        assert rec["identity"] is True
        assert rec["t0"] is not None
    assert (out / "fan.csv").exists()


def test_pullback_h_zero_skips_identity(tmp_path):
    out = tmp_path / "o"
    assert run("pullback", "--replicates", "1", "--h", "0", "--out", str(out)) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["realizations"][0]["identity"] is None


# ---------------------------------------------------------------------------
# dual
# ---------------------------------------------------------------------------


def test_dual_drifted_report(tmp_path):
    out = tmp_path / "o"
    rc = run("dual", "--n-macro", "10", "--m", "20", "--forward-starts", "-1,0,1",
             "--backward-starts", "0", "--out", str(out))
    assert rc == 0
    assert (out / "dual_r0.csv").exists()
    audit = json.loads((out / "crossing_audit_r0.json").read_text())
    assert audit["crossings"] == 0
    report = json.loads((out / "report.json").read_text())
    entry = report["systems"][0]
    assert entry["crossings"] == 0
    assert "covariation" in entry
    assert "forward_recovery" in entry and "backward_recovery" in entry
    assert "trapping_demo" not in report


def test_dual_too_small_for_recovery_exits_2(tmp_path, capsys):
    out = tmp_path / "o"
    rc = run("dual", "--n-macro", "8", "--m", "16", "--forward-starts", "-1,1",
             "--backward-starts", "0", "--out", str(out))
    assert rc == 2
    assert "increments" in capsys.readouterr().err


def test_dual_zero_drift_trapping_demo(tmp_path):
    out = tmp_path / "o"
    rc = run("dual", "--drift", "zero", "--seed", "1", "--n-macro", "12", "--m", "16",
             "--forward-starts", "-1,1", "--backward-starts", "0", "--out", str(out))
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    demo = report["trapping_demo"]
    assert demo["walls"] == [-1.0, 1.0]
    assert demo["merged"] is True
    assert demo["max_interior_at_or_below_merge"] == 0
    assert demo["threaded_ok"] is True
    assert 0.0 <= demo["hugging_fraction"] < 1.0
    assert len(demo["interior_counts"]) >= 2


def test_dual_trapping_demo_reports_inconclusive(tmp_path):
    # this lattice's walls do not merge within the window; the demo must say
    # so rather than fabricate a verdict
    out = tmp_path / "o"
    rc = run("dual", "--drift", "zero", "--seed", "0", "--n-macro", "12", "--m", "16",
             "--forward-starts", "-1,1", "--backward-starts", "0", "--out", str(out))
    assert rc == 0
    demo = json.loads((out / "report.json").read_text())["trapping_demo"]
    assert demo["merged"] is False
    assert demo["inconclusive"] is True
    assert demo["merge_time"] is None


# ---------------------------------------------------------------------------
# meeting
# ---------------------------------------------------------------------------


def test_meeting_law_check(tmp_path, capsys):
    out = tmp_path / "o"
    rc = run("meeting", "--replicates", "2000", "--refine", "1", "--out", str(out))
    assert rc == 0
    assert "KS p=" in capsys.readouterr().out
    payload = json.loads((out / "law_check.json").read_text())
    assert payload["oracle_rate"] == 1.0
    assert payload["gap"] == 1.0
    assert len(payload["levels"]) == 2
    lv0, lv1 = payload["levels"]
    assert lv0["dt"] == 0.001 and lv1["dt"] == 0.0005
    for lv in (lv0, lv1):
        assert lv["met_ci"][0] <= lv["met_fraction"] <= lv["met_ci"][1]
        assert abs(lv["met_fraction"] - lv["law_fraction"]) < 0.02
        assert lv["ks_pvalue"] > 0.0
    lines = (out / "meeting_times.csv").read_text().splitlines()
    assert lines[0] == "replicate,tau"
    assert len(lines) == 2001


def test_meeting_unknown_drift_has_no_oracle(tmp_path):
    out = tmp_path / "o"
    rc = run("meeting", "--drift", "linsin:-1:0.2", "--replicates", "200",
             "--window", "2", "--out", str(out))
    assert rc == 0
    payload = json.loads((out / "law_check.json").read_text())
    assert payload["oracle_rate"] is None
    assert "law_fraction" not in payload["levels"][0]


# ---------------------------------------------------------------------------
# verify through the command line
# ---------------------------------------------------------------------------


def test_verify_subset_quick(tmp_path, capsys):
    out = tmp_path / "o"
    rc = run("verify", "--quick", "--criteria", "1", "--out", str(out))
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "verify: 1 pass, 0 fail, 0 underpowered" in stdout
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert len(verdicts) == 1 and verdicts[0]["number"] == 1
    assert verdicts[0]["status"] == "pass"
    assert "seconds" not in verdicts[0]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["verdicts"] == [{"number": 1, "status": "pass"}]
    assert set(manifest["criterion_seconds"]) == {"1"}
    text = (out / "resolved_config.txt").read_text()
    assert "quick = true" in text and "criteria = 1" in text


def test_verify_quick_statistical_is_underpowered(tmp_path, capsys):
    out = tmp_path / "o"
    rc = run("verify", "--quick", "--criteria", "3", "--out", str(out))
    assert rc == 0
    assert "0 fail, 1 underpowered" in capsys.readouterr().out
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts[0]["status"] == "underpowered"


def test_verify_failing_criterion_exits_1(tmp_path, capsys):
    out = tmp_path / "o"
    rc = run("verify", "--quick", "--criteria", "7", "--out", str(out))
    assert rc == 1
    assert "1 fail" in capsys.readouterr().out
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts[0]["status"] == "fail"


def test_verify_fault_degrades_the_law(tmp_path, capsys):
    # the injected fault turns the bridge correction off; at quick scale the
    # damage shows as a degraded pass fraction rather than a decisive fail
    out = tmp_path / "o"
    rc = run("verify", "--quick", "--fault", "no-bridge", "--criteria", "2",
             "--out", str(out))
    assert rc in (0, 1)
    assert "bridge=OFF" in capsys.readouterr().out
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts[0]["measured"]["bridge_correction"] is False
    assert verdicts[0]["measured"]["pass_fraction"] < 0.95


def test_schemas_cover_all_commands():
    assert set(SCHEMAS) == {"simulate", "pullback", "dual", "meeting", "verify"}
    for command, schema in SCHEMAS.items():
        for key, (kind, default, help_text) in schema.items():
            assert kind in {"int", "float", "str", "bool", "floats", "ints"}
            assert help_text
