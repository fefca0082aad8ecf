import csv
import io
import json

import pytest

from mensa_sim import __version__
from mensa_sim.accel import TechnologyTable
from mensa_sim.cli import main
from mensa_sim.sim import TRACE_HEADER


@pytest.fixture
def lstm_model(tmp_path):
    path = tmp_path / "m.json"
    assert main(["synth", "--archetype", "lstm", "--depth", "2", "--seed", "0",
                 "-o", str(path)]) == 0
    return path


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_synth_then_characterize(lstm_model, tmp_path, capsys):
    out = tmp_path / "prof.csv"
    assert main(["characterize", str(lstm_model), "-o", str(out)]) == 0
    rows = _rows(out.read_text())
    gates = [r for r in rows if r["kind"] == "LstmGateUnit"]
    assert gates and all(r["param_intensity"] == "1" for r in gates)
    assert list(rows[0]) == ["unit_id", "kind", "macs", "param_bytes", "in_act_bytes",
                             "out_act_bytes", "param_intensity", "act_intensity"]


def test_compare_happy_path(lstm_model, capsys):
    assert main(["compare", str(lstm_model), "--platforms", "baseline,mensa"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [r["platform"] for r in rows] == ["Baseline", "Mensa"]
    assert float(rows[0]["energy_reduction"]) == 1.0
    assert float(rows[1]["utilization_gain"]) >= 10


def test_exit_codes(tmp_path, lstm_model, capsys):
    assert main(["simulate", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "layers": [{"id": 0, "kind": "Blob"}]}')
    assert main(["simulate", str(bad)]) == 2
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
    assert main(["synth", "--archetype", "cnn", "--depth", "0"]) == 1
    assert main(["compare", str(lstm_model), "--platforms", "mensa"]) == 1
    assert main(["simulate", str(lstm_model), "--platform", str(tmp_path / "nope.json")]) == 2
    capsys.readouterr()


def test_every_subcommand_runs(lstm_model, tmp_path):
    cnn = tmp_path / "cnn.json"
    assert main(["synth", "--archetype", "cnn", "--depth", "12", "-o", str(cnn)]) == 0
    for cmd in ("characterize", "cluster", "cost", "schedule"):
        for fmt in ("csv", "json"):
            out = tmp_path / f"{cmd}.{fmt}"
            assert main([cmd, str(cnn), "--format", fmt, "-o", str(out)]) == 0
            text = out.read_text()
            if fmt == "json":
                assert isinstance(json.loads(text), list)
            else:
                assert len(_rows(text)) > 0
    out = tmp_path / "roof.csv"
    assert main(["roofline", "--platform", "mensa", "-o", str(out)]) == 0
    assert {r["accel"] for r in _rows(out.read_text())} == {"Accel-A", "Accel-B", "Accel-C"}


def test_simulate_report_and_trace(lstm_model, tmp_path):
    out = tmp_path / "rep.json"
    assert main(["simulate", str(lstm_model), "--trace", "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["platform"] == "Mensa"
    assert 0 <= rep["utilization"] <= 1
    assert set(rep["energy_j"]) >= {"pe_dynamic", "static_total", "total"}
    trace = _rows((tmp_path / "rep.json.trace.csv").read_text())
    assert tuple(trace[0]) == TRACE_HEADER
    assert max(float(r["end_s"]) for r in trace) == pytest.approx(rep["latency_s"])


def test_schedule_columns(lstm_model, capsys):
    assert main(["schedule", str(lstm_model)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert list(rows[0]) == ["unit_id", "cluster", "phase1_accel", "final_accel", "remapped"]
    assert {r["remapped"] for r in rows} <= {"true", "false"}


def test_tech_override_and_flags(lstm_model, tmp_path, capsys):
    tech = tmp_path / "tech.json"
    tech.write_text(json.dumps(TechnologyTable(e_mac=3.2e-12).to_json()))
    base = tmp_path / "a.json"
    over = tmp_path / "b.json"
    assert main(["simulate", str(lstm_model), "-o", str(base)]) == 0
    assert main(["simulate", str(lstm_model), "--tech", str(tech), "-o", str(over)]) == 0
    e0 = json.loads(base.read_text())["energy_j"]["pe_dynamic"]
    e1 = json.loads(over.read_text())["energy_j"]["pe_dynamic"]
    assert e1 == pytest.approx(2 * e0)
    refetch = tmp_path / "c.json"
    assert main(["simulate", str(lstm_model), "--hidden-refetch", "-o", str(refetch)]) == 0
    assert json.loads(refetch.read_text())["energy_j"]["total"] > \
        json.loads(base.read_text())["energy_j"]["total"]
    bad_tech = tmp_path / "bad_tech.json"
    bad_tech.write_text('{"e_flux": 1}')
    assert main(["simulate", str(lstm_model), "--tech", str(bad_tech)]) == 2
    capsys.readouterr()


@pytest.mark.parametrize("argv", [
    ["synth", "--archetype", "transducer", "--depth", "6", "--seed", "7"],
    ["characterize", "{model}"],
    ["cluster", "{model}"],
    ["cost", "{model}", "--format", "json"],
    ["schedule", "{model}", "--lambda", "0.5"],
    ["simulate", "{model}", "--trace"],
    ["compare", "{model}"],
    ["roofline"],
])
def test_byte_identical_reruns(argv, tmp_path):
    model = tmp_path / "model.json"
    assert main(["synth", "--archetype", "rcnn", "--depth", "6", "--seed", "8",
                 "-o", str(model)]) == 0
    argv = [a.replace("{model}", str(model)) for a in argv]
    outputs = []
    for run in range(2):
        out = tmp_path / f"out{run}"
        assert main(argv + ["-o", str(out)]) == 0
        files = sorted(tmp_path.glob(f"out{run}*"))
        outputs.append([(f.name.replace(f"out{run}", "out"), f.read_bytes()) for f in files])
    assert outputs[0] == outputs[1]


def test_manifest(lstm_model, tmp_path):
    manifest = tmp_path / "runs.jsonl"
    out = tmp_path / "prof.csv"
    assert main(["characterize", str(lstm_model), "-o", str(out),
                 "--manifest", str(manifest)]) == 0
    entry = json.loads(manifest.read_text().splitlines()[-1])
    assert entry["command"] == "characterize"
    assert entry["version"] == __version__
    assert entry["exit"] == 0
    import hashlib
    assert entry["outputs"][str(out)] == hashlib.sha256(out.read_bytes()).hexdigest()
    assert entry["inputs"][str(lstm_model)] == hashlib.sha256(lstm_model.read_bytes()).hexdigest()
    assert main(["simulate", str(tmp_path / "none.json"), "--manifest", str(manifest)]) == 2
    assert json.loads(manifest.read_text().splitlines()[-1])["exit"] == 2


def test_no_color(monkeypatch, lstm_model, tmp_path, capsys):
    monkeypatch.setenv("MENSA_SIM_NO_COLOR", "1")
    assert main(["simulate", str(tmp_path / "x.json")]) == 2
    assert "\x1b[" not in capsys.readouterr().err
