"""Command line front end: schemas, reports, determinism, exit codes."""

from __future__ import annotations

import json

import numpy as np

from vnflow.cli import (
    canonical_json,
    encode_algebra,
    encode_operator,
    main,
)
from vnflow import BlockOperator, weighted_model


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _calibration_doc():
    alg = weighted_model([2], [1.0])
    b0 = BlockOperator([np.diag([1.0, -1.0])])
    b1 = BlockOperator([np.diag([1.0, 1.0])])
    return {
        "task": "spectral_flow",
        "algebra": encode_algebra(alg),
        "operators": {"B0": encode_operator(b0), "B1": encode_operator(b1)},
        "path": {"keyframes": [{"t": 0.0, "op": "B0"}, {"t": 1.0, "op": "B1"}]},
        "seed": 7,
    }


def test_canonical_json_floats():
    text = canonical_json({"a": 1.0, "b": 1.0 / 3.0, "c": [True, None, "x"]})
    assert text == '{"a":1,"b":0.33333333333333331,"c":[true,null,"x"]}'


def test_spectral_flow_task(tmp_path, capsys):
    doc = _write(tmp_path, "task.json", _calibration_doc())
    out = tmp_path / "report.json"
    assert main(["run", doc, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["task"] == "spectral_flow"
    assert report["k0_class"] == [-1]
    assert report["tau"] == -1.0
    assert report["partition"] == [0.0, 1.0]
    assert report["version"] == "0.1.0"
    assert report["seed"] == 7


def test_reports_are_byte_identical(tmp_path):
    doc = _write(tmp_path, "task.json", _calibration_doc())
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert main(["run", doc, "--out", str(out1)]) == 0
    assert main(["run", doc, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_tracks_csv(tmp_path):
    doc = _write(tmp_path, "task.json", _calibration_doc())
    out = tmp_path / "report.json"
    tracks = tmp_path / "tracks.csv"
    assert main(["run", doc, "--out", str(out), "--tracks", str(tracks)]) == 0
    lines = tracks.read_text().strip().splitlines()
    assert lines[0] == "t,block,index,eigenvalue"
    assert len(lines) == 1 + 201 * 2
    first = lines[1].split(",")
    assert first[:3] == ["0", "0", "0"]
    assert float(first[3]) == -1.0


def test_malformed_matrix_exits_2(tmp_path, capsys):
    doc = _calibration_doc()
    doc["operators"]["B0"] = [[[[1.0, 0.0], [0.0, 0.0]]]]  # 1 x 2 block
    path = _write(tmp_path, "bad.json", doc)
    assert main(["run", path]) == 2
    assert "square" in capsys.readouterr().err


def test_unknown_task_exits_2(tmp_path):
    doc = _calibration_doc()
    doc["task"] = "frobnicate"
    assert main(["run", _write(tmp_path, "bad.json", doc)]) == 2


def test_unreadable_file_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["run", str(broken)]) == 2


def test_noninvertible_quotient_path_exits_3(tmp_path, capsys):
    alg = weighted_model([2], [1.0], [False])
    b0 = BlockOperator([np.diag([1.0, -0.5])])
    b1 = BlockOperator([np.diag([1.0, 0.5])])
    doc = {
        "task": "spectral_flow",
        "algebra": encode_algebra(alg),
        "operators": {"B0": encode_operator(b0), "B1": encode_operator(b1)},
        "path": {"keyframes": [{"t": 0.0, "op": "B0"}, {"t": 1.0, "op": "B1"}]},
    }
    assert main(["run", _write(tmp_path, "nf.json", doc)]) == 3
    assert "t = 0.5" in capsys.readouterr().err


def test_generate_dirac_roundtrip(tmp_path, capsys):
    model_file = tmp_path / "dirac.json"
    assert main(["generate", "dirac", "--m", "3", "--k", "1", "--out", str(model_file)]) == 0
    doc = json.loads(model_file.read_text())
    assert doc["task"] == "sf_unitary"
    assert doc["triple"]["unitary"] == "u"
    out = tmp_path / "report.json"
    assert main(["run", str(model_file), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["k0_class"] == [0]
    assert "commutator_quotient" in report["diagnostics"]["residuals"]


def test_generate_crossing_roundtrip(tmp_path):
    model_file = tmp_path / "crossing.json"
    assert (
        main(
            [
                "generate",
                "crossing",
                "--n",
                "4",
                "--crossings",
                "+,-,+",
                "--seed",
                "3",
                "--out",
                str(model_file),
            ]
        )
        == 0
    )
    out = tmp_path / "report.json"
    assert main(["run", str(model_file), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    # net one upward crossing under the frozen sign convention
    assert report["k0_class"] == [-1]
    assert report["tau"] == -1.0


def test_generate_to_stdout(capsys):
    assert main(["generate", "dirac", "--m", "2", "--k", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["algebra"]["blocks"][0]["dim"] == 5


def test_index_task(tmp_path):
    alg = weighted_model([4], [1.0])
    shift = np.zeros((4, 4), dtype=complex)
    for j in range(3):
        shift[j + 1, j] = 1.0
    p = np.diag([1.0, 1.0, 1.0, 0.0]).astype(complex)
    q = np.diag([0.0, 1.0, 1.0, 0.0]).astype(complex)
    s = q @ shift @ p
    doc = {
        "task": "index",
        "algebra": encode_algebra(alg),
        "operators": {
            "S": encode_operator(BlockOperator([s])),
            "p": encode_operator(BlockOperator([p])),
            "q": encode_operator(BlockOperator([q])),
        },
        "index": {"S": "S", "p": "p", "q": "q"},
    }
    out = tmp_path / "report.json"
    assert main(["run", _write(tmp_path, "idx.json", doc), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["k0_class"] == [1]


def test_boundary_and_pairing_tasks(tmp_path):
    rng = np.random.default_rng(0)
    z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    qmat, r = np.linalg.qr(z)
    u = BlockOperator([qmat * (np.diagonal(r) / np.abs(np.diagonal(r)))])
    alg = weighted_model([3], [1.0])
    p = BlockOperator([np.diag([1.0, 1.0, 0.0])])
    doc = {
        "task": "boundary",
        "algebra": encode_algebra(alg),
        "operators": {"S": encode_operator(u)},
        "boundary": {"S": "S"},
    }
    out = tmp_path / "report.json"
    assert main(["run", _write(tmp_path, "b.json", doc), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["k0_class"] == [0]

    doc2 = {
        "task": "pairing",
        "algebra": encode_algebra(alg),
        "operators": {"p": encode_operator(p), "u": encode_operator(u)},
        "pairing": {"p": "p", "u": "u"},
    }
    out2 = tmp_path / "report2.json"
    assert main(["run", _write(tmp_path, "p.json", doc2), "--out", str(out2)]) == 0
    report = json.loads(out2.read_text())
    assert report["k0_class"] == [0]
    assert report["diagnostics"]["residuals"]["cos_identity"] == 0


def test_checks_task(tmp_path):
    model_file = tmp_path / "dirac.json"
    assert main(["generate", "dirac", "--m", "2", "--k", "1", "--out", str(model_file)]) == 0
    doc = json.loads(model_file.read_text())
    doc["task"] = "checks"
    out = tmp_path / "report.json"
    assert main(["run", _write(tmp_path, "checks.json", doc), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["diagnostics"]["kasparov_passed"] is True
    residuals = report["diagnostics"]["residuals"]["resolvent_integral"]
    assert all(v <= 1e-6 for v in residuals.values())


def test_tolerance_flags_reach_the_solver(tmp_path):
    # an absurdly large gap tolerance turns the calibration path non-Fredholm
    doc = _write(tmp_path, "task.json", _calibration_doc())
    assert main(["run", doc, "--tol-gap", "0.5"]) == 0  # all-ideal: vacuous
    alg = weighted_model([2], [1.0], [False])
    b0 = BlockOperator([np.diag([3.0, -2.0])])
    b1 = BlockOperator([np.diag([3.0, -1.0])])
    doc2 = {
        "task": "spectral_flow",
        "algebra": encode_algebra(alg),
        "operators": {"B0": encode_operator(b0), "B1": encode_operator(b1)},
        "path": {"keyframes": [{"t": 0.0, "op": "B0"}, {"t": 1.0, "op": "B1"}]},
    }
    path2 = _write(tmp_path, "t2.json", doc2)
    assert main(["run", path2]) == 0
    assert main(["run", path2, "--tol-gap", "1.5"]) == 3
