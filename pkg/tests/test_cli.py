import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from artifact.cli import format_table, kernel_features, main, parse_verify_spec
from artifact.checker import OracleConfig

from conftest import DATA, KERNELS, kernel

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "run-record.schema.json").read_text())
DIAG = str(KERNELS / "diag_2d2p.st")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for k in ("MAX_SWEEPS", "EMIT", "VERIFY", "OUT", "NO_EQUIV_CHECK", "NO_VERTEX_ELIM"):
        monkeypatch.delenv("ARTIFACT_" + k, raising=False)


# ----------------------------------------------------------------- lift


def test_lift_prints_the_summary(capsys):
    code, out, _ = run(capsys, "lift", DIAG)
    assert code == 0
    assert out.startswith("B(x1, x2) =\n")


def test_emit_both_writes_files(capsys, tmp_path):
    code, out, _ = run(capsys, "lift", DIAG, "--emit", "both", "--out", str(tmp_path))
    assert code == 0 and out == ""
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["diag_2d2p.halide.txt", "diag_2d2p.summary.txt"]
    assert "select(" in (tmp_path / "diag_2d2p.halide.txt").read_text()


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "lift", DIAG, "--verify", "trials=3,seed=1")
    assert code == 0
    assert "verify diag_2d2p: PASS trials=3" in out


def test_verify_failure_exits_2(capsys):
    # a negative tolerance cannot be met, so the verdict must be FAIL
    code, out, _ = run(capsys, "lift", DIAG, "--verify", "trials=2,tol=-1")
    assert code == 2
    assert "FAIL" in out


def test_lift_failures_exit_1(capsys):
    code, _, err = run(capsys, "lift", str(DATA / "irregular.st"))
    assert code == 1
    assert "irregular.st:6:5" in err
    code, _, err = run(capsys, "lift", str(DATA / "corrupted.st"))
    assert code == 1
    assert "corrupted.st:5:27" in err
    code, _, err = run(capsys, "lift", str(DATA / "missing.st"))
    assert code == 1 and "no such file" in err


def test_sweep_cap_is_a_lift_failure(capsys):
    code, _, err = run(capsys, "lift", DIAG, "--max-sweeps", "1")
    assert code == 1 and err


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["lift", DIAG, "--verify", "bogus=1"])
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 2


def test_json_record_validates(capsys):
    code, out, _ = run(capsys, "lift", DIAG, "--json", "--verify", "trials=2")
    rec = json.loads(out)
    jsonschema.validate(rec, SCHEMA)
    assert code == rec["exitCode"] == 0
    assert rec["consistency"] == "Equal" and rec["sweeps"] == 4
    assert [s["rounds"] for s in rec["sccs"]] == [2, 2]
    assert rec["verification"]["passed"] is True


def test_json_record_for_failure_validates(capsys):
    code, out, _ = run(capsys, "lift", str(DATA / "irregular.st"), "--json")
    rec = json.loads(out)
    jsonschema.validate(rec, SCHEMA)
    assert code == rec["exitCode"] == 1
    assert rec["status"] == "lift-failed" and "6:5" in rec["error"]


def test_trace(capsys):
    code, out, _ = run(capsys, "lift", DIAG, "--trace")
    assert code == 0
    assert "start=phi1_B" in out and "(converged)" in out


# ------------------------------------------------------------ settings


def test_env_fills_unset_options(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("ARTIFACT_EMIT", "dsl")
    monkeypatch.setenv("ARTIFACT_OUT", str(tmp_path))
    code, _, _ = run(capsys, "lift", DIAG)
    assert code == 0
    assert [p.name for p in tmp_path.iterdir()] == ["diag_2d2p.halide.txt"]


def test_flags_beat_env(capsys, monkeypatch):
    monkeypatch.setenv("ARTIFACT_MAX_SWEEPS", "1")
    code, _, _ = run(capsys, "lift", DIAG)
    assert code == 1
    code, _, _ = run(capsys, "lift", DIAG, "--max-sweeps", "8")
    assert code == 0


def test_env_switches_accelerations_off(capsys, monkeypatch):
    tiled = str(KERNELS / "tiled2_2d5p.st")
    code, out, _ = run(capsys, "lift", tiled, "--json")
    assert json.loads(out)["sweeps"] == 4
    monkeypatch.setenv("ARTIFACT_NO_VERTEX_ELIM", "1")
    code, out, _ = run(capsys, "lift", tiled, "--json")
    rec = json.loads(out)
    assert rec["sweeps"] == 6 and rec["options"]["vertexElim"] is False


def test_verify_spec():
    assert parse_verify_spec("") == OracleConfig()
    cfg = parse_verify_spec("trials=7,shape=4x5,seed=2,tol=1e-9")
    assert (cfg.trials, cfg.shape, cfg.seed, cfg.tol) == (7, (4, 5), 2, 1e-9)


# ---------------------------------------------------------------- corpus


def test_corpus_isolates_a_bad_file(capsys, tmp_path):
    shutil.copy(KERNELS / "jacobi_1d3p.st", tmp_path)
    shutil.copy(DATA / "corrupted.st", tmp_path)
    code, out, err = run(capsys, "corpus", str(tmp_path), "--verify", "trials=2", "--json")
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    status = {Path(r["file"]).name: r["record"]["status"] for r in doc["rows"]}
    assert status == {"corrupted.st": "lift-failed", "jacobi_1d3p.st": "ok"}
    assert code == 1


def test_corpus_empty_directory(capsys, tmp_path):
    code, out, err = run(capsys, "corpus", str(tmp_path))
    assert code == 0 and "warning" in err


def test_corpus_table(capsys, tmp_path):
    for k in ("jacobi_1d3p", "unroll2_1d3p"):
        shutil.copy(KERNELS / f"{k}.st", tmp_path)
    code, out, _ = run(capsys, "corpus", str(tmp_path), "--verify", "trials=2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["kernel", "shape", "opts", "sweeps", "lift", "(s)", "verify", "speedup"]
    assert any(l.startswith("unroll2_1d3p") and "LU" in l for l in lines)
    assert lines[-1].startswith("mean lift speedup")


def test_corpus_jobs_match_serial(capsys, tmp_path):
    for k in ("jacobi_1d3p", "diag_2d2p", "boundary_1d"):
        shutil.copy(KERNELS / f"{k}.st", tmp_path)
    _, serial, _ = run(capsys, "corpus", str(tmp_path), "--verify", "trials=2", "--json")
    _, par, _ = run(capsys, "corpus", str(tmp_path), "--verify", "trials=2", "--json", "--jobs", "2")
    key = lambda doc: [(r["kernel"], r["record"]["status"], r["record"]["sweeps"]) for r in json.loads(doc)["rows"]]
    assert key(serial) == key(par)


def test_features():
    assert kernel_features(kernel("diag_2d2p")) == {"shape": "2d-2p-1o", "opts": []}
    assert kernel_features(kernel("boundary_1d"))["opts"] == ["LF"]
    assert kernel_features(kernel("parallel_2d5p"))["opts"] == ["PD"]
    assert kernel_features(kernel("buffered_1d"))["opts"] == ["IB"]
    assert kernel_features(kernel("unroll2_1d3p"))["opts"] == ["LU"]
    assert kernel_features(kernel("tiled4_2d5p"))["opts"] == ["LT"]
    assert kernel_features(kernel("box_3d27p"))["shape"] == "3d-27p-1o"


def test_table_without_rows():
    assert format_table([]).splitlines()[0].startswith("kernel")


# ----------------------------------------------------------------- dumps


def test_dump_commands(capsys):
    code, out, _ = run(capsys, "dump-ir", DIAG)
    assert code == 0 and "Loopcall" in out
    code, out, _ = run(capsys, "dump-graph", DIAG)
    assert code == 0 and out == (DATA / "diag_2d2p.graph.txt").read_text() + "\n"
    code, out, _ = run(capsys, "dump-graph", DIAG, "--format", "dot")
    assert code == 0 and out.startswith("digraph")
    code, _, err = run(capsys, "dump-ir", str(DATA / "corrupted.st"))
    assert code == 1 and err


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "artifact", "lift", DIAG, "--emit", "dsl"],
                       capture_output=True, text=True, timeout=60)
    assert p.returncode == 0
    assert p.stdout.startswith("// diag_2d2p")
