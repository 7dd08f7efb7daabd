import csv
import io
import json

import pytest

from qpholder.cli import main
from qpholder.holder import ScanConfig, log_grid
from qpholder.torus import AnalyticTorusFunction, FrequencyVector

from conftest import ALPHA2, GOLDEN


def run(*argv):
    out = io.StringIO()
    status = main(list(argv), out=out)
    return status, out.getvalue()


def test_lyapunov_csv():
    status, text = run("lyapunov", "--lambda", "0", "--E", "2.5:3:2", "--iters", "2000")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert status == 0 and len(rows) == 2 and float(rows[1]["LE"]) == pytest.approx(0.9624, abs=2e-3)


def test_rotation_and_ids():
    _, text = run("rotation", "--lambda", "0", "--E=-1:1:3")
    rho = [float(r["rho"]) for r in csv.DictReader(io.StringIO(text))]
    assert rho[1] == pytest.approx(0.25, abs=1e-4)
    _, text = run("ids", "--lambda", "0", "--E", "0")
    assert float(text.splitlines()[1].split(",")[1]) == pytest.approx(0.5, abs=2e-4)


def test_weyl_json():
    _, text = run("weyl", "--lambda", "0", "--E", "0", "--k", "10", "--theta", "0.3")
    doc = json.loads(text)
    assert doc["k"] == 10 and doc["det_P"] == pytest.approx(100) and doc["eps_k"] == pytest.approx(0.05)


def test_potential_file(tmp_path):
    path = tmp_path / "v.json"
    path.write_text(AnalyticTorusFunction.cosine_potential(2).to_json())
    _, text = run("weyl", "--potential", str(path), "--alpha", ",".join(map(str, ALPHA2)),
                  "--E", "0.4", "--k", "5", "--theta", "0.1,0.2")
    assert len(json.loads(text)["theta"]) == 2


def test_kam_trace_lines():
    status, text = run("kam-trace", "--alpha", ",".join(map(str, ALPHA2)), "--E", "0.3")
    lines = [json.loads(x) for x in text.splitlines()]
    assert status == 0 and lines and lines[-1]["eps_next"] < 1e-12
    assert lines[0]["kind"] == "resonant"


def test_diophantine():
    status, text = run("diophantine", "--alpha", str(GOLDEN), "--kappa", "0.25", "--tau", "1.5", "--N", "10000")
    doc = json.loads(text)
    assert status == 0 and doc["certified"] and doc["kind"] == "DiophantineCertificate"
    status, text = run("diophantine", "--alpha", "0.5", "--kappa", "0.1", "--tau", "1.5", "--N", "5")
    doc = json.loads(text)
    assert status == 1 and doc["n"] == [2]


def test_holder_scan(tmp_path):
    cfg = ScanConfig(AnalyticTorusFunction.cosine_potential(1), 0.05, FrequencyVector([GOLDEN]), [0.0],
                     [0.0, 1.0], log_grid(1e-3, 1e-0, 1))
    path = tmp_path / "scan.json"
    path.write_text(json.dumps(cfg.to_dict()))
    summary = tmp_path / "summary.json"
    status, text = run("holder-scan", "--config", str(path), "--summary", str(summary))
    assert status == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 8 and rows[0]["case"] == "0"
    assert json.loads(summary.read_text())["chain_violations"] == 0
