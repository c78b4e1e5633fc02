import json
from pathlib import Path

import pytest

from coalflow.verify import (
    CRITERIA,
    FAULTS,
    STATISTICAL,
    Verdict,
    VerifyError,
    _status,
    compare_run_dirs,
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    run_suite,
)


# ---------------------------------------------------------------------------
# status semantics and the verdict record
# ---------------------------------------------------------------------------


def test_status_truth_table():
    assert _status(True, quick=False) == "pass"
    assert _status(True, quick=True) == "underpowered"
    assert _status(False, quick=False) == "fail"
    # a quick miss is inconclusive unless the evidence is decisive
    assert _status(False, quick=True) == "underpowered"
    assert _status(False, quick=True, decisive_fail=True) == "fail"
    assert _status(False, quick=False, decisive_fail=True) == "fail"


def test_verdict_record():
    v = Verdict(3, "decay", "pass", {"rate": 1.0}, "rate 1.000", seconds=2.5)
    assert v.passed
    assert v.line.startswith("PASS")
    assert "criterion 3" in v.line and "decay" in v.line and "rate 1.000" in v.line
    # json form must stay byte-stable across runs, so no timing
    payload = v.to_json()
    assert "seconds" not in payload
    assert set(payload) == {"number", "name", "status", "measured", "detail"}
    assert not Verdict(7, "x", "fail", {}, "").passed
    assert Verdict(2, "x", "underpowered", {}, "").passed


def test_registry_shape():
    assert sorted(CRITERIA) == list(range(1, 10))
    assert STATISTICAL < set(CRITERIA)
    assert 1 not in STATISTICAL and 8 not in STATISTICAL and 9 not in STATISTICAL
    assert "no-bridge" in FAULTS


# ---------------------------------------------------------------------------
# individual criteria at reduced scales
# ---------------------------------------------------------------------------


def test_criterion_1_exact():
    v = criterion_1()
    assert v.status == "pass"
    assert v.measured["worst_abs_error"] < 1e-10
    assert len(v.measured["grid"]) == 9
    for row in v.measured["grid"]:
        assert row["mass"] == pytest.approx(1.0, abs=1e-8)


def test_criterion_2_reduced_scale_passes():
    v = criterion_2(seed=0, runs=2, replicates=12_000)
    assert v.status == "pass"
    assert v.measured["pass_fraction"] == 1.0
    assert v.measured["bridge_correction"] is True
    assert all(p >= 0.01 for p in v.measured["pvalues"])


def test_criterion_2_no_bridge_fault_is_decisive():
    # without the bridge correction the law is wrong even at quick scale
    v = criterion_2(seed=0, quick=True, runs=1, replicates=12_000, fault="no-bridge")
    assert v.status == "fail"
    assert v.measured["pass_fraction"] == 0.0
    assert v.measured["bridge_correction"] is False
    assert "OFF" in v.detail


def test_criterion_3_quick_is_underpowered():
    v = criterion_3(seed=0, quick=True)
    assert v.status == "underpowered"
    assert 0.8 <= v.measured["fitted_rate"] <= 1.2
    assert v.measured["r_squared"] >= 0.95
    assert len(v.measured["p_hat"]) == len(v.measured["s_values"]) == 4


def test_criterion_4_reduced_scale():
    v = criterion_4(seed=0, quick=True, realizations=8)
    assert v.status == "underpowered"
    assert v.measured["stabilized_fraction"] == 1.0
    assert v.measured["identity_fraction"] == 1.0
    assert v.measured["unique_of_stabilized"] == [8, 8]
    assert all(v.measured["checks"].values())


def test_criterion_5_reduced_scale():
    v = criterion_5(seed=0, quick=True, replicates=4_000, flows=6)
    assert v.status == "underpowered"
    assert v.measured["stabilized_fraction"] == 0.0
    for row in v.measured["variance_rows"]:
        assert row["relative_error"] <= 0.10


def test_criterion_6_reduced_scale():
    v = criterion_6(seed=0, quick=True, recovery_replicates=6, nonmeeting_replicates=400)
    assert v.status == "underpowered"
    assert v.measured["crossings"] == 0
    assert all(v.measured["checks"].values())
    assert v.measured["n_pre"] >= 1000 and v.measured["n_post"] >= 1000


def test_criterion_7_reports_honest_failure():
    # the pinned starts sit below the bound's validity threshold and the two
    # lowest genuinely exceed it, so the criterion must report a failure
    v = criterion_7(seed=0, replicates=40_000)
    assert v.status == "fail"
    assert v.measured["validity_threshold"] == pytest.approx(14.677, abs=0.01)
    rows = {r["start"]: r for r in v.measured["rows"]}
    assert sorted(rows) == [6, 8, 10]
    assert not rows[6]["bounded"] and rows[6]["estimate"] > rows[6]["bound"]
    assert not rows[8]["bounded"] and rows[8]["estimate"] > rows[8]["bound"]
    assert rows[10]["bounded"]
    assert not any(r["in_validity_range"] for r in rows.values())


def test_criterion_8_zero_violations():
    v = criterion_8(seed=0, quick=True)
    assert v.status == "pass"
    assert v.measured["violations"] == 0
    assert v.measured["checked"] > 10_000


def test_criterion_9_byte_determinism():
    v = criterion_9(seed=0)
    assert v.status == "pass"
    assert v.measured["differing_files"] == []
    assert v.measured["files_compared"] == 3
    rc1, rc2 = v.measured["exit_codes"]
    assert rc1 == rc2


# ---------------------------------------------------------------------------
# run-directory comparison
# ---------------------------------------------------------------------------


def _write_run_dir(root: Path, wall: float, body: str = "1,2,3\n") -> Path:
    root.mkdir()
    (root / "data.csv").write_text(body)
    (root / "manifest.json").write_text(
        json.dumps(
            {
                "artifact": "x",
                "files": {"data.csv": "abc"},
                "wall_clock_seconds": wall,
                "criterion_seconds": {"1": wall / 2},
            }
        )
    )
    return root


def test_compare_run_dirs_ignores_timing(tmp_path):
    a = _write_run_dir(tmp_path / "a", wall=1.0)
    b = _write_run_dir(tmp_path / "b", wall=99.0)
    assert compare_run_dirs(a, b) == []


def test_compare_run_dirs_flags_content(tmp_path):
    a = _write_run_dir(tmp_path / "a", wall=1.0)
    b = _write_run_dir(tmp_path / "b", wall=1.0, body="1,2,4\n")
    assert compare_run_dirs(a, b) == ["data.csv"]


def test_compare_run_dirs_flags_manifest_payload(tmp_path):
    a = _write_run_dir(tmp_path / "a", wall=1.0)
    b = _write_run_dir(tmp_path / "b", wall=1.0)
    data = json.loads((b / "manifest.json").read_text())
    data["files"]["data.csv"] = "tampered"
    (b / "manifest.json").write_text(json.dumps(data))
    assert compare_run_dirs(a, b) == ["manifest.json"]


def test_compare_run_dirs_flags_name_mismatch(tmp_path):
    a = _write_run_dir(tmp_path / "a", wall=1.0)
    b = _write_run_dir(tmp_path / "b", wall=1.0)
    (b / "extra.txt").write_text("x")
    assert compare_run_dirs(a, b) == ["extra.txt"]


# ---------------------------------------------------------------------------
# suite driver
# ---------------------------------------------------------------------------


def test_run_suite_validates_inputs():
    with pytest.raises(VerifyError, match="unknown criteria"):
        run_suite(criteria=[1, 42])
    with pytest.raises(VerifyError, match="unknown fault"):
        run_suite(fault="bogus")


def test_run_suite_echo_and_timing():
    lines = []
    verdicts = run_suite(criteria=[1], echo=lines.append)
    assert len(verdicts) == 1
    assert verdicts[0].number == 1
    assert verdicts[0].seconds > 0
    assert len(lines) == 1 and lines[0].startswith("PASS")


def test_run_suite_orders_and_dedupes():
    verdicts = run_suite(criteria=[1, 1, 1])
    assert [v.number for v in verdicts] == [1]
