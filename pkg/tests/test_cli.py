import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from kelly_slc.cli import SWEEP_COLUMNS, main

import oracles

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
COST = {"c1": 1, "rho1": 0}


@pytest.fixture
def write(tmp_path):
    def _write(doc, name="s.json"):
        p = tmp_path / name
        p.write_text(doc if isinstance(doc, str) else json.dumps(doc), encoding="utf-8")
        return str(p)
    return _write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def analyze_json(capsys, path):
    code, out, _ = run(capsys, "analyze", path, "--json")
    return code, json.loads(out)


def test_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", SCENARIOS / "fair_odds.json")
    assert code == 0 and "valid scenario" in out


def test_validate_reports_bad_reward(capsys, write):
    path = write({"prior": [0.5, 0.5], "channel": [[1, 0], [0, 1]], "reward": [[1, 2], [0, 1]], "cost": COST})
    code, out, _ = run(capsys, "validate", path)
    assert code == 2 and "DiagonalNotRowMax" in out


def test_validate_reports_every_issue(capsys, write):
    path = write({"prior": [0.7, 0.7], "channel": [[1, 0], [0, 1]], "reward": [[1, 2], [0, 1]], "cost": COST})
    code, out, _ = run(capsys, "validate", path)
    assert code == 2 and "DiagonalNotRowMax" in out and "prior" in out


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", ""])
def test_validate_parse_failure(capsys, write, text):
    assert run(capsys, "validate", write(text))[0] == 3


def test_missing_file_is_parse_error(capsys, tmp_path):
    assert run(capsys, "validate", tmp_path / "absent.json")[0] == 3


@pytest.mark.parametrize("doc,code", [
    ({"prior": [0.5, 0.5], "channel": [[1, 0], [0, 1]], "reward": [[2, 0], [0, 2]], "cost": COST, "extra": 1}, "UnknownField"),
    ({"prior": [0.5, 0.5], "channel": [[1, 0], [0, 1]], "reward": [[2, 0], [0, 2]]}, "MissingField"),
    ({"prior": [0.5, 0.5], "channel": [[1, 0], [0, 1]], "reward": [[2, 0], [0, 2]], "cost": {"c1": 1}}, "MissingField"),
    ({"prior": [0.5, 0.5], "channel": [[1, 0], [0, 1]], "reward": [[2, 0], [0, 2]], "cost": {**COST, "c2": 0}}, "UnknownField"),
    ({"prior": ["a", 0.5], "channel": [[1, 0], [0, 1]], "reward": [[2, 0], [0, 2]], "cost": COST}, "BadValue"),
    ({"prior": [1, 0], "channel": [[1, 0], [0, 1]], "reward": [[2, 0], [0, 2]], "cost": COST}, "UnreachableOutput"),
])
def test_invalid_documents_exit_2(capsys, write, doc, code):
    rc, out, err = run(capsys, "analyze", write(doc))
    assert rc == 2 and code in err


def test_rational_strings_parse_exactly(capsys, write):
    _, a = analyze_json(capsys, str(SCENARIOS / "mixed_payouts.json"))
    dec = {"prior": [0.5, 0.5], "channel": [[0.6, 0.4], [0.4, 0.6]], "reward": [[2, 1], [1, 3]], "cost": COST}
    _, b = analyze_json(capsys, write(dec))
    assert a["strategy"] == b["strategy"] and a["lambda"] == b["lambda"]


def test_analyze_mixed_payouts_text(capsys):
    code, out, _ = run(capsys, "analyze", SCENARIOS / "mixed_payouts.json")
    assert code == 0
    assert "verdict: ProportionalOptimal" in out
    assert "strategy: [[0.5, 0.5], [0, 1]]" in out
    # twelve significant digits
    lam = oracles.growth([0.5, 0.5], [[0.6, 0.4], [0.4, 0.6]], [[2, 1], [1, 3]], [[0.5, 0.5], [0, 1]])
    assert f"lambda: {lam:.12g}" in out


def test_analyze_json_fields_and_schema(capsys):
    code, rep = analyze_json(capsys, str(SCENARIOS / "mixed_payouts.json"))
    assert code == 0 and rep["schema"] == 1
    for key in ("verdict", "strategy", "c", "d0", "lambda", "lambda_pi", "lambda_nsi", "delta", "gamma",
                "mutual_information", "capacity", "decomposition"):
        assert key in rep
    assert rep["verdict"] == "ProportionalOptimal"
    assert np.allclose(rep["strategy"], [[0.5, 0.5], [0, 1]], atol=1e-6)
    assert np.allclose(rep["decomposition"]["B"], [[0.8, 0.2], [0.4, 0.6]], atol=1e-9)
    assert np.allclose(rep["decomposition"]["D"], [2.5, 5.0], atol=1e-9)
    assert rep["mutual_information"] == pytest.approx(oracles.mutual_info([0.5, 0.5], [[0.6, 0.4], [0.4, 0.6]]), abs=1e-12)


def test_analyze_bsc_closed_form(capsys, write):
    doc = {"prior": [0.5, 0.5], "channel": [[0.9, 0.1], [0.1, 0.9]], "reward": [[3, 1], [1, 3]], "cost": COST}
    code, rep = analyze_json(capsys, write(doc))
    assert code == 0
    assert rep["verdict"] == "NonProportionalOptimal"
    assert abs(rep["c"] - 0.5) < 1e-6


def test_analyze_dominant_wager(capsys):
    code, out, _ = run(capsys, "analyze", SCENARIOS / "dominant.json")
    assert code == 0 and "verdict: TrivialRateZero" in out and "wager: 1" in out
    _, rep = analyze_json(capsys, str(SCENARIOS / "dominant.json"))
    assert rep["wager"] == 1
    assert rep["strategy"] == [[1.0, 0.0], [1.0, 0.0]]


def test_analyze_undetermined_exit_4(capsys, write):
    doc = {"prior": ["1/3", "1/3", "1/3"], "channel": [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
           "reward": [[2, 0, 0], [4, 4, 0], [1, 0, 1]], "cost": COST}
    code, rep = analyze_json(capsys, write(doc))
    assert code == 4
    assert rep["verdict"] == "Undetermined" and rep["reason"]
    assert rep["decomposition"]["exists"] is False


def test_analyze_box_example(capsys):
    code, rep = analyze_json(capsys, str(SCENARIOS / "fair_odds_box.json"))
    assert code == 0
    assert np.allclose(rep["strategy"], [[0.8, 0.2], [0.2, 0.8]], atol=1e-6)
    assert abs(rep["c"] - np.log(4) / np.log(9)) < 1e-6


def test_round_trip_strategy_override(capsys, tmp_path):
    src = str(SCENARIOS / "mixed_payouts.json")
    _, rep = analyze_json(capsys, src)
    strat = tmp_path / "strategy.json"
    strat.write_text(json.dumps(rep), encoding="utf-8")
    code, out, _ = run(capsys, "simulate", src, "--strategy", strat, "--races", 1000, "--json")
    assert code == 0
    sim = json.loads(out)
    assert sim["analytic"]["lambda"] == rep["lambda"]
    assert sim["strategy"] == rep["strategy"]
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps(rep["strategy"]), encoding="utf-8")
    code, out, _ = run(capsys, "simulate", src, "--strategy", bare, "--races", 1000, "--json")
    assert json.loads(out) == sim


def test_simulate_reads_file_settings_and_flags(capsys):
    src = SCENARIOS / "fair_odds.json"
    code, out, _ = run(capsys, "simulate", src, "--json")
    sim = json.loads(out)
    assert code == 0 and sim["n_races"] == 100_000 and sim["seed"] == 7
    lam = 1 - float(oracles.h2(0.1))
    assert abs(sim["empirical"]["lambda"] - lam) < 3 * sim["standard_error"]["lambda"]
    assert sim["analytic"]["lambda"] == pytest.approx(lam, abs=1e-12)
    code, out, _ = run(capsys, "simulate", src, "--races", 500, "--seed", 3, "--json", "--workers", 4)
    assert json.loads(out)["n_races"] == 500
    code, text, _ = run(capsys, "simulate", src, "--races", 500, "--seed", 3)
    assert code == 0 and "Lambda" in text and "analytic" in text


def test_simulate_single_race_deterministic_prior(capsys, write):
    doc = {"prior": [1, 0], "channel": [[0.8, 0.2], [0.2, 0.8]], "reward": [[3, 0], [0, 2]], "cost": COST}
    code, out, _ = run(capsys, "simulate", write(doc), "--races", 1, "--json")
    sim = json.loads(out)
    assert code == 0
    assert sim["final_log_wealth"] == np.log2(3)
    assert sim["empirical"]["lambda"] == np.log2(3)


def test_simulate_ruin_exit_5(capsys, write, tmp_path):
    strat = tmp_path / "s.json"
    strat.write_text(json.dumps([[1, 0], [1, 0]]), encoding="utf-8")
    code, out, _ = run(capsys, "simulate", SCENARIOS / "fair_odds.json", "--strategy", strat, "--races", 1000)
    assert code == 5 and "ruin" in out


def test_simulate_bad_strategy_file(capsys, tmp_path):
    strat = tmp_path / "s.json"
    strat.write_text(json.dumps([[0.5, 0.6], [1, 0]]), encoding="utf-8")
    assert run(capsys, "simulate", SCENARIOS / "fair_odds.json", "--strategy", strat)[0] == 2
    strat.write_text(json.dumps([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), encoding="utf-8")
    assert run(capsys, "simulate", SCENARIOS / "fair_odds.json", "--strategy", strat)[0] == 2
    assert run(capsys, "simulate", SCENARIOS / "fair_odds.json", "--races", 0)[0] == 2


def test_simulate_trajectory_csv(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, _, _ = run(capsys, "simulate", SCENARIOS / "fair_odds.json", "--races", 50, "--trajectory", path)
    assert code == 0
    rows = list(csv.reader(open(path, encoding="utf-8")))
    assert rows[0] == ["race_index", "log_wealth_bits"] and len(rows) == 51


def sweep(capsys, tmp_path, src, *flags):
    out = tmp_path / "sweep.csv"
    code, _, err = run(capsys, "sweep", src, *flags, "--output", out)
    if code:
        return code, None
    raw = out.read_bytes().decode("utf-8")
    assert "\r\n" in raw
    return code, list(csv.DictReader(io.StringIO(raw, newline="")))


def test_sweep_mixed_payouts_flip(capsys, tmp_path):
    code, rows = sweep(capsys, tmp_path, SCENARIOS / "mixed_payouts.json",
                       "--family", "bsc", "--start", 0.05, "--stop", 0.5, "--step", 0.05)
    assert code == 0 and len(rows) == 10
    assert list(rows[0]) == SWEEP_COLUMNS
    for row in rows:
        q = float(row["parameter"])
        assert (row["verdict"] == "ProportionalOptimal") == (q >= 0.4 - 1e-9)


def test_sweep_fair_odds_lambda(capsys, tmp_path):
    code, rows = sweep(capsys, tmp_path, SCENARIOS / "fair_odds.json",
                       "--family", "bsc", "--start", 0.05, "--stop", 0.5, "--step", 0.05, "--workers", 3)
    assert code == 0
    qs = [float(r["parameter"]) for r in rows]
    assert qs == sorted(qs)
    for r, q in zip(rows, qs):
        expect = 1 - float(oracles.h2(q))
        assert float(r["lambda"]) == pytest.approx(expect, abs=1e-11)


def test_sweep_z_family_never_single_letter(capsys, tmp_path):
    code, rows = sweep(capsys, tmp_path, SCENARIOS / "zchannel.json",
                       "--family", "z", "--start", 0.05, "--stop", 0.95, "--step", 0.05)
    assert code == 0 and len(rows) == 19
    assert {r["verdict"] for r in rows} == {"NoSingleLetterCode"}


@pytest.mark.parametrize("flags", [
    ("--family", "bsc", "--start", 0.5, "--stop", 0.1, "--step", 0.1),
    ("--family", "bsc", "--start", 0.1, "--stop", 0.5, "--step", 0),
    ("--family", "bsc", "--start", 0.5, "--stop", 1.5, "--step", 0.5),
    ("--family", "z", "--start", 0.5, "--stop", 1.0, "--step", 0.5),
])
def test_sweep_bad_spec_exit_2(capsys, tmp_path, flags):
    assert sweep(capsys, tmp_path, SCENARIOS / "mixed_payouts.json", *flags)[0] == 2


def test_sweep_rejects_three_horses(capsys, tmp_path):
    flags = ("--family", "bsc", "--start", 0.1, "--stop", 0.2, "--step", 0.1)
    assert sweep(capsys, tmp_path, SCENARIOS / "cyclic3.json", *flags)[0] == 2
