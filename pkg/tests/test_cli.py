import io
import json
import math
import os
import subprocess
import sys

import pytest

from spatiobox import cli, corrfn

COMMANDS = ("eval", "chsh", "bci", "witness", "protocol", "lhv", "quantum", "sodbox", "fit")


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def cos_file(tmp_path):
    path = tmp_path / "cos.json"
    path.write_text(json.dumps(corrfn.CorrelationFunction.relational(1, cos={1: 1.0}).to_json()))
    return str(path)


def test_chsh_scifi_at_given_angles():
    code, out, err = run("chsh", "--scifi", "--angles", "1.5", "3.9", "0", "2.3")
    assert code == 0
    data = json.loads(out)
    assert data["chsh"] == pytest.approx(3.6289, abs=1e-4) and data["violated"] is True
    assert err.startswith("chsh ") and "violated=true" in err


def test_lhv_gamma_prints_twelve_digits():
    code, out, _ = run("lhv", "gamma", "--n", "2")
    assert code == 0
    assert "0.184374739575" in out


def test_bci_closed_form(cos_file):
    code, out, _ = run("bci", "--corr", cos_file, "--n", "4", "--theta-plus", "0", "--theta-minus", str(math.pi))
    data = json.loads(out)
    assert code == 0 and data["lhs"] == pytest.approx(2.5) and data["bound"] == 2 and data["violated"]


def test_witness_outputs_are_byte_identical(tmp_path, cos_file):
    args = ("witness", "--corr", cos_file, "--theta-plus", "0", "--theta-minus", str(math.pi), "--seed", "7")
    a = run(*args)
    b = run(*args)
    assert a == b and a[0] == 0
    assert json.loads(a[1])["n"] == 4


def test_protocol_reproducible_and_worker_count_matters_only_via_chunks(tmp_path):
    args = ("protocol", "--werner", "1", "--flip-b", "--theta-plus", "0", "--theta-minus", str(math.pi / 2),
            "--shots", "20000", "--seed", "3", "--workers", "2")
    first, second = run(*args), run(*args)
    assert first == second
    assert json.loads(first[1])["witnessed"] is True


def test_out_writes_atomically_and_prints_summary(tmp_path, cos_file):
    target = tmp_path / "result.json"
    code, out, err = run("bci", "--corr", cos_file, "--n", "6", "--theta-plus", "0", "--theta-minus", str(math.pi),
                         "--out", str(target))
    assert code == 0 and err == ""
    assert out.startswith("bci ") and "violated=true" in out
    assert json.loads(target.read_text())["lhs"] == pytest.approx(5.045084971874737, abs=1e-10)
    assert [p.name for p in tmp_path.iterdir() if p.name.startswith(".tmp-")] == []


def test_negative_verdict_exit_code(tmp_path):
    path = tmp_path / "big.json"
    path.write_text(json.dumps(corrfn.CorrelationFunction.relational(1, cos={1: 0.9}).to_json()))
    code, _, err = run("lhv", "check", "--corr", str(path))
    assert code == 2 and "INCONCLUSIVE" in err
    code, _, _ = run("lhv", "sample", "--corr", str(path), "--angles", "0", "0", "--shots", "100")
    assert code == 2


def test_missing_field_is_named(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"constant": 0.0, "terms": []}))
    code, out, err = run("eval", "--corr", str(path))
    assert code == 1 and out == ""
    assert "two_j" in err and err.startswith("error:")


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"two_j": 1,\n "terms": [}\n')
    code, _, err = run("eval", "--corr", str(path))
    assert code == 1 and "line 2" in err


def test_sodbox_csv_errors_name_line_and_field(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text("x1,x2,y1,y2,p_pp,p_pm,p_mp,p_mm\n1,0,1,0,0.25,0.25,0.25,oops\n")
    code, _, err = run("sodbox", "certify", "--csv", str(path), "--d", "2")
    assert code == 1 and "line 2" in err and "p_mm" in err


def test_sodbox_round_trip_pass_and_fail(tmp_path):
    good = tmp_path / "good.csv"
    assert run("sodbox", "sample", "--source", "werner:0.9", "--rows", "60", "--seed", "1", "--out", str(good))[0] == 0
    code, out, _ = run("sodbox", "certify", "--csv", str(good))
    assert code == 0 and json.loads(out)["passed"] is True
    bad = tmp_path / "pr.csv"
    run("sodbox", "sample", "--source", "pr", "--rows", "60", "--seed", "1", "--out", str(bad))
    code, out, _ = run("sodbox", "certify", "--csv", str(bad))
    assert code == 2 and json.loads(out)["passed"] is False


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 11, "format": "csv"}))
    code, out, _ = run("lhv", "gamma", "--n", "3", "--config", str(cfg))
    assert code == 0 and out.startswith("key,value\n")
    code, out, _ = run("lhv", "gamma", "--n", "3", "--config", str(cfg), "--format", "json")
    assert code == 0 and json.loads(out)
    cfg.write_text(json.dumps({"seed": -1}))
    code, _, err = run("lhv", "gamma", "--config", str(cfg))
    assert code == 1 and "seed" in err
    cfg.write_text(json.dumps({"tolerances": {"nope": 1}}))
    assert "tolerances.nope" in run("lhv", "gamma", "--config", str(cfg))[2]


def test_csv_to_json_conversion():
    code, out, _ = run("quantum", "--werner", "0.5", "--points", "3", "--format", "json")
    rows = json.loads(out)
    assert code == 0 and len(rows) == 3
    assert rows[0]["C"] == pytest.approx(-0.5)


def test_fit_from_csv(tmp_path):
    path = tmp_path / "samples.csv"
    lines = ["alpha,beta,value"]
    for k in range(60):
        a, b = 0.37 * k, 1.1 * k + 0.2
        lines.append(f"{a!r},{b!r},{-0.6 * math.cos(2 * (a - b))!r}")
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run("fit", "--csv", str(path), "--spin", "1", "--prune", "1e-9")
    data = json.loads(out)
    assert code == 0
    assert data["function"]["terms"] == [{"m": 2, "n": 2, "cos": pytest.approx(-0.6), "sin": pytest.approx(0.0, abs=1e-9)}]


def test_bad_spin_named():
    code, _, err = run("lhv", "gamma-j", "--spin", "0.3")
    assert code == 1 and "spin" in err


@pytest.mark.parametrize("command", COMMANDS)
def test_help_names_construct(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "--seed" in text and "--out" in text and "--format" in text
    assert len(text.split("\n\n")[1].strip()) > 20


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "spatiobox.cli", "lhv", "gamma", "--n", "1"],
                          capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["gamma"] == pytest.approx(math.sqrt(2) / math.pi, abs=1e-11)
