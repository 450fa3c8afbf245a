from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from resispike.cli import law_json, main, read_matrix, sig12
from resispike.errors import ParseError
from resispike.simlab import ScenarioConfig, _perturbed
from resispike.testkit import TestReport, residual_spike_test


def write(path, a, newline="\n", header=None):
    lines = [",".join(repr(float(v)) for v in row) for row in a]
    if header:
        lines.insert(0, header)
    path.write_text(newline.join(lines) + newline)
    return str(path)


@pytest.fixture
def pair(tmp_path):
    cfg = ScenarioConfig(m=40, n_x=160, n_y=120, theta_x=30, theta_y=30, u_x=0, u_y=1, seed=4)
    x, y = _perturbed(cfg, 0)
    return x, y, write(tmp_path / "x.csv", x), write(tmp_path / "y.csv", y)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_test_command_rejects_and_reports(pair, capsys):
    x, y, px, py = pair
    code, out, _ = run(["test", px, py], capsys)
    doc = json.loads(out)
    assert code == 2
    assert doc["schema"] == "1"
    rep = TestReport.from_dict(doc["report"])
    assert rep == residual_spike_test(x, y)


def test_same_file_twice_exit_zero(pair, capsys):
    _, _, px, _ = pair
    code, out, _ = run(["test", px, px], capsys)
    assert code == 0
    assert json.loads(out)["report"]["diagnostics"]["degenerate"] is True


def test_output_file(pair, tmp_path, capsys):
    _, _, px, py = pair
    dest = tmp_path / "r.json"
    code, out, _ = run(["test", px, py, "--output", str(dest)], capsys)
    assert out == "" and code == 2
    assert json.loads(dest.read_text())["schema"] == "1"


def test_crlf_lf_header_transpose(pair, tmp_path, capsys):
    x, y, px, py = pair
    crlf = write(tmp_path / "xc.csv", x, newline="\r\n")
    hx = write(tmp_path / "xh.csv", x, header="a,b,c")
    hy = write(tmp_path / "yh.csv", y, header="label")
    tr = write(tmp_path / "xt.csv", x.T)
    sx, sy = tmp_path / "xs.csv", tmp_path / "ys.csv"
    sx.write_text((tmp_path / "x.csv").read_text().replace(",", ";"))
    sy.write_text((tmp_path / "y.csv").read_text().replace(",", ";"))
    base = run(["test", px, py], capsys)[1]
    assert run(["test", crlf, py], capsys)[1] == base
    assert run(["test", hx, hy, "--header"], capsys)[1] == base
    assert run(["test", str(sx), str(sy), "--delimiter", ";"], capsys)[1] == base
    ty = write(tmp_path / "yt.csv", y.T)
    assert run(["test", tr, ty, "--transpose"], capsys)[1] == base


def test_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\r\n4,oops,6\r\n")
    code, _, err = run(["test", str(bad), str(bad)], capsys)
    assert code == 64
    assert "line 2, column 2" in err
    ragged = tmp_path / "rag.csv"
    ragged.write_text("1,2,3\n4,5\n")
    with pytest.raises(ParseError) as exc:
        read_matrix(ragged)
    assert exc.value.line == 2


def test_missing_file_and_usage(tmp_path, capsys):
    assert run(["test", str(tmp_path / "nope.csv"), str(tmp_path / "nope.csv")], capsys)[0] == 66
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 64
    with pytest.raises(SystemExit) as exc:
        main(["test", "a", "b", "--alpha", "2"])
    assert exc.value.code == 64


def test_null_params_mp(capsys):
    code, out, _ = run(["null-params", "--mp", "--cx", "1", "--cy", "1"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["law"]["lambda_plus"] == pytest.approx(2 + np.sqrt(3), rel=1e-11)
    assert set(doc["density"]) == {"max", "min"}
    assert len(doc["density"]["max"]["x"]) == 201


def test_sigma_twelve_significant_digits(capsys):
    _, out, _ = run(["null-params", "--mp", "--cx", "0.3", "--cy", "0.7", "--m", "50"], capsys)
    s = json.loads(out)["law"]["sigma_plus"]
    digits = repr(s).replace(".", "").replace("-", "").lstrip("0").split("e")[0]
    assert len(digits) <= 12
    assert s == sig12(s)


def test_null_params_from_data_matches_library(pair, capsys):
    x, y, px, py = pair
    _, out, _ = run(["null-params", "--x", px, "--y", py], capsys)
    lib = law_json(residual_spike_test(x, y).law)
    assert json.dumps(json.loads(out)["law"], sort_keys=True) == json.dumps(lib, sort_keys=True)


def test_null_params_from_spectra(tmp_path, capsys):
    sx = tmp_path / "sx.txt"
    sx.write_text("\n".join(str(v) for v in np.linspace(0.3, 2.0, 30)))
    code, out, _ = run(["null-params", "--spectrum-x", str(sx), "--spectrum-y", str(sx)], capsys)
    assert code == 0 and json.loads(out)["law"]["m"] == 30


def test_null_params_needs_input(capsys):
    assert run(["null-params"], capsys)[0] == 78


STUDY = """
[study]
kind = null

[defaults]
m = 40
n_x = 120
n_y = 100
theta = 200
replicates = 6

[scenario.a]
rho = 0.2
"""


def test_simulate_seed_and_workers(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(STUDY)
    a = run(["simulate", str(cfg), "--seed", "5"], capsys)[1]
    b = run(["simulate", str(cfg), "--seed", "5", "--workers", "2"], capsys)[1]
    c = run(["simulate", str(cfg), "--seed", "6"], capsys)[1]
    assert a == b != c
    monkeypatch.setenv("RESISPIKE_SEED", "5")
    assert run(["simulate", str(cfg)], capsys)[1] == a
    doc = json.loads(a)
    assert doc["schema"] == "1"
    assert {r["stat_name"] for r in doc["summaries"]} == {"lambda_max", "lambda_min"}
    assert all(r["replicates"] == 6 for r in doc["summaries"])
    code, out, _ = run(["simulate", str(cfg), "--format", "csv", "--replicates", "3"], capsys)
    assert code == 0 and out.splitlines()[0].startswith("scenario,family")


def test_wrong_kind_and_empty_config(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(STUDY)
    assert run(["power", str(cfg)], capsys)[0] == 78
    empty = tmp_path / "e.cfg"
    empty.write_text("")
    code, _, err = run(["criterion", str(empty)], capsys)
    assert code == 78 and "empty" in err


def test_power_command(tmp_path, capsys):
    cfg = tmp_path / "p.cfg"
    cfg.write_text(
        "[study]\nkind = power\nnull_reps = 10\n[scenario.a]\nm = 40\nn_x = 100\nn_y = 100\n"
        "theta = 30\nu_x = 0\nu_y = 1\nreplicates = 4\n"
    )
    code, out, _ = run(["power", str(cfg)], capsys)
    row = json.loads(out)["power"][0]
    assert code == 0 and row["rate_t"] == 1.0 and row["replicates"] == 4


def test_criterion_bundled_scenarios(capsys):
    from resispike import bundled_config

    code, out, _ = run(["criterion", str(bundled_config("criterion_scenarios"))], capsys)
    curves = json.loads(out)["curves"]
    assert code == 0 and len(curves) == 4
    for c in curves:
        mu = [p[1] for p in c["points"]]
        assert c["verdict"] and np.all(np.diff(mu) >= -1e-9)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "resispike", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "resispike" in r.stdout
