import json
import math

import pytest

from spinmem import cli
from spinmem.library import protocol_dir


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


REF = protocol_dir() / "fig2_reference_echo.sps"


def test_run_is_deterministic_and_replayable(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d in (a, b):
        code, out, _ = _run(capsys, "run", REF, "--seed", 7, "--packets", 64, "--out", d)
        assert code == 0
    assert _files(a) == _files(b)
    assert (a / "trace_0.csv").read_text().splitlines()[0] == "t_s,re,im"
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 7 and man["experiment"] == "run" and "sequence_text" in man["sweep"]
    code, _, _ = _run(capsys, "replay", a / "manifest.json", "--out", c)
    assert code == 0
    assert _files(a) == _files(c)


def test_seq_flag_and_jobs_do_not_change_outputs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    _run(capsys, "run", "--seq", REF, "--packets", 600, "--out", a, "--jobs", 1)
    _run(capsys, "run", "--seq", REF, "--packets", 600, "--out", b, "--jobs", 3)
    fa, fb = _files(a), _files(b)
    assert fa["trace_0.csv"] == fb["trace_0.csv"]
    assert json.loads(fa["manifest.json"])["jobs"] == 1


def test_memory_outputs(tmp_path, capsys):
    code, out, _ = _run(capsys, "memory", "--phi", "0,90", "--store", "1ms", "--ideal-pulses", "--packets", 100, "--out", tmp_path)
    assert code == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert [r["phi_e_deg"] for r in fit["echoes"]] == [0.0, 90.0]
    assert all(r["ratio"] == pytest.approx(1.0, abs=1e-9) for r in fit["echoes"])
    assert {p.name for p in tmp_path.glob("trace_*.csv")} == {
        "trace_reference_phi0.csv", "trace_reference_phi90.csv", "trace_phi0_store0.001.csv", "trace_phi90_store0.001.csv"}


def test_t2n_sweep_matches_relaxation_oracle(tmp_path, capsys):
    code, out, _ = _run(capsys, "t2n-sweep", "--gamma", 10, "--store", "10ms,20ms,50ms,100ms,200ms",
                        "--ideal-pulses", "--packets", 32, "--out", tmp_path)
    assert code == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["fit"]["t2"] == pytest.approx(2 / 10, rel=0.02)


def test_t2n_sweep_cpmg(tmp_path, capsys):
    code, _, _ = _run(capsys, "t2n-sweep", "--gamma", 10, "--store", "5ms,11ms,21ms,41ms", "--cpmg-rate", 1000,
                      "--ideal-pulses", "--packets", 16, "--out", tmp_path)
    assert code == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["times"] == pytest.approx([5e-3, 11e-3, 21e-3, 41e-3])
    assert fit["t2"] == pytest.approx(0.2, rel=0.03)


def test_tomography_output(tmp_path, capsys):
    code, out, _ = _run(capsys, "tomography", "--labels", "+X,-Z", "--ideal-pulses", "--errors", "mw=0.05,rf=0.05",
                        "--packets", 100, "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "tomography.json").read_text())
    assert [r["label"] for r in doc["records"]] == ["+X", "-Z"]
    for r in doc["records"]:
        assert {"label", "areas", "bloch", "rho_re", "rho_im", "fidelity"} <= set(r)
    assert 0.5 < doc["mean_fidelity"] < 1.0
    assert json.loads(out)["mean_fidelity"] == doc["mean_fidelity"]


def test_probe_output(tmp_path, capsys):
    code, out, _ = _run(capsys, "probe", "--phi", "0", "--points", 7, "--packets", 32, "--out", tmp_path)
    assert code == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert len(fit["fits"]) == 1 and math.isfinite(fit["fits"][0]["frequency"])
    rows = (tmp_path / "trace_probe_phi0.csv").read_text().splitlines()
    assert rows[0] == "t_s,re,im" and len(rows) == 8


@pytest.mark.parametrize(
    "argv, fragment",
    [
        (["memory", "--store", "1parsec"], "cannot read time"),
        (["memory", "--errors", "mw=2"], "angle errors"),
        (["memory", "--errors", "xx=0.1"], "unknown error key"),
        (["tomography", "--labels", "+Q"], "unknown tomography labels"),
        (["t2n-sweep", "--store", "1ms,2ms"], "at least four"),
        (["run"], "needs a sequence file"),
        (["run", "/nonexistent.sps"], "cannot read"),
        (["memory", "--seed", "-1"], "unsigned"),
    ],
)
def test_config_errors_are_json_with_nonzero_exit(tmp_path, capsys, argv, fragment):
    code, out, err = _run(capsys, *argv, "--out", tmp_path)
    assert code == 2
    doc = json.loads(err)
    assert fragment in doc["error"]["message"]


def test_parse_errors_carry_span(tmp_path, capsys):
    bad = tmp_path / "bad.sps"
    bad.write_text("delay 1us\npulse mw 1-3 pi phase=0\n")
    code, _, err = _run(capsys, "run", bad, "--out", tmp_path / "o")
    assert code == 2
    e = json.loads(err)["error"]
    assert e["kind"] == "semantic" and e["line"] == 2 and e["column_start"] == 10


def test_bad_params_and_manifest(tmp_path, capsys):
    p = tmp_path / "p.json"
    p.write_text("{")
    code, _, err = _run(capsys, "memory", "--params", p, "--out", tmp_path)
    assert code == 2 and "invalid JSON" in json.loads(err)["error"]["message"]
    p.write_text(json.dumps({"electron_zeeman": 1e6, "nuclear_zeeman": 1e9}))
    code, _, err = _run(capsys, "memory", "--params", p, "--out", tmp_path)
    assert code == 2
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"experiment": "dance"}))
    code, _, err = _run(capsys, "replay", m)
    assert code == 2 and "not a spinmem manifest" in err


def test_params_file_is_used(tmp_path, capsys):
    from spinmem.spin import SystemParams

    p = tmp_path / "sip.json"
    p.write_text(json.dumps(SystemParams.si_p(relaxation_rate=5.0).to_dict()))
    code, _, _ = _run(capsys, "run", REF, "--params", p, "--packets", 8, "--out", tmp_path / "o")
    assert code == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["params"]["relaxation_rate"] == 5.0


def test_time_parser():
    assert cli.parse_time("10ms") == pytest.approx(0.01)
    assert cli.parse_time("2.5us") == pytest.approx(2.5e-6)
    assert cli.parse_times("1ms, 2ms") == pytest.approx([1e-3, 2e-3])
    with pytest.raises(cli.ConfigError):
        cli.parse_time("ten")
