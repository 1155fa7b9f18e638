import json
import subprocess
import sys

import numpy as np
import pytest

from covpovm import __version__
from covpovm.cli import main
from covpovm.errors import ParseError
from covpovm.fileio import (
    AnalysisReport,
    decode_matrix,
    encode_matrix,
    group_from_json,
    group_to_json,
    load_group,
    load_json,
    load_rep,
    parse_stabilizers,
    rep_to_json,
    round_floats,
)
from covpovm.group_core import cyclic_group

from builders import Z


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def files(tmp_path):
    enc = encode_matrix
    return {
        "z2rep": write(tmp_path / "z2rep.json", {"dim": 2, "matrices": [enc(np.eye(2)), enc(Z)]}),
        "identity": write(tmp_path / "id.json", {"seeds": [enc(np.eye(2))]}),
        "rank_one": write(tmp_path / "r1.json", {"seeds": [[[2, 0], [0, 0]]]}),
        "bad_norm": write(tmp_path / "bad.json", {"seeds": [[[3, 0], [0, 1]]]}),
        "diag_pair": write(tmp_path / "pair.json", {"seeds": [[[1, 0], [0, 0]], [[0, 0], [0, 1]]]}),
        "ensemble": write(tmp_path / "ens.json", {"states": [[[1, 0], [0, 0]], [[0, 0], [0, 1]]],
                                                  "priors": [0.5, 0.5]}),
        "bad_ensemble": write(tmp_path / "bens.json", {"states": [[[1, 0], [0, 0]]], "priors": [0.7]}),
        "stabilizers": write(tmp_path / "stab.json", {"subgroups": [[0, 1], [0, 1]]}),
        "broken": str(tmp_path / "broken.json"),
        "out": str(tmp_path / "out.json"),
    }


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_decompose_weyl(capsys):
    code, out, _ = run(["decompose", "--group", "product:cyclic:2,cyclic:2", "--rep", "builtin:weyl:2"], capsys)
    assert code == 0
    rows = [line.split() for line in out.splitlines()[1:] if line.strip()[:1].isdigit()]
    assert rows == [["0", "2", "1"]]
    assert "commutant dimension: 1" in out


def test_decompose_z2_file(files, capsys):
    code, out, _ = run(["decompose", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--out", files["out"]], capsys)
    assert code == 0
    report = json.loads(open(files["out"]).read())
    assert len(report["decomposition"]) == 2
    assert report["application"]["commutant_dimension"] == 2


def test_malformed_json_is_input_error(files, capsys):
    open(files["broken"], "w").write('{"dim": 2,\n "matrices": [')
    code, _, err = run(["decompose", "--group", "cyclic:2", "--rep", f"file:{files['broken']}"], capsys)
    assert code == 1
    assert "line 2" in err


def test_check_rank_one_weyl(files, capsys):
    code, out, _ = run(["check", "--group", "product:cyclic:2,cyclic:2", "--rep", "builtin:weyl:2",
                        "--seeds", files["rank_one"]], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["membership"]["member"] is True
    assert report["extremality"]["is_extremal"] is True
    assert report["tool_version"] == __version__
    assert report["tolerances"]["rank"] == 1e-10


def test_check_split_identity(files, capsys):
    code, out, _ = run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", files["identity"], "--split"], capsys)
    assert code == 0
    tree = json.loads(out)["split_tree"]
    assert len(tree["children"]) == 2
    for child in tree["children"]:
        assert child["is_extremal"] and child["children"] == []
        assert child["weight"] == pytest.approx(0.5)


def test_check_non_member_skips_extremality(files, capsys):
    code, out, _ = run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", files["bad_norm"]], capsys)
    assert code == 2
    report = json.loads(out)
    assert report["membership"]["member"] is False
    assert report["extremality"] is None


def test_check_with_stabilizers(files, capsys):
    code, out, _ = run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", files["diag_pair"], "--stabilizers", files["stabilizers"]], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["membership"]["member"] is True
    assert report["application"]["outcome_counts"] == [1, 1]
    code, _, err = run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", files["identity"], "--stabilizers", "0,1;0,1"], capsys)
    assert code == 1  # one seed for two stabilizers


def test_non_invariant_seed_is_validation_error(tmp_path, files, capsys):
    seeds = write(tmp_path / "x.json", {"seeds": [[[1, 1], [1, 1]]]})
    code, _, err = run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", seeds, "--stabilizers", "0,1"], capsys)
    assert code == 2 and "validation" in err


@pytest.mark.parametrize("d,priors,basis,error,degenerate", [
    (2, "0.7,0.3", 1, 0.3, False), (2, "0.5,0.5", 1, 0.5, True), (4, "0.1,0.9", 2, 0.1, False)])
def test_mub(d, priors, basis, error, degenerate, capsys):
    code, out, err = run(["mub", "--d", str(d), "--priors", priors], capsys)
    assert code == 0
    app = json.loads(out)["application"]
    assert app["chosen_basis"] == basis
    assert app["min_error_probability"] == pytest.approx(error, abs=1e-12)
    assert app["degenerate"] is degenerate
    assert all(c["is_extremal"] for c in app["certificates"])
    assert f"chosen basis: {basis}" in err


def test_mub_bad_priors(capsys):
    assert run(["mub", "--d", "2", "--priors", "0.5,0.6"], capsys)[0] == 1
    assert run(["mub", "--d", "1", "--priors", "1"], capsys)[0] == 1
    assert run(["mub", "--d", "2", "--priors", "a,b"], capsys)[0] == 1


def test_mutinfo_bounds(files, capsys):
    code, out, err = run(["mutinfo", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                          "--seeds", files["identity"], "--ensemble", files["ensemble"]], capsys)
    assert code == 0
    app = json.loads(out)["application"]
    assert app["orbit_bound"] == 2 and app["nonzero_orbits"] == 1
    assert "orbit bound: 2" in err
    code, out, _ = run(["mutinfo", "--group", "product:cyclic:2,cyclic:2", "--rep", "builtin:weyl:2",
                        "--seeds", files["rank_one"], "--ensemble", files["ensemble"], "--out", files["out"]],
                       capsys)
    assert code == 0 and "orbit bound: 1" in out
    app = json.loads(open(files["out"]).read())["application"]
    # elements |p><p| / 2 (twice each) identify |0> and |1> perfectly
    assert app["orbit_bound"] == 1
    assert app["mutual_information_bits"] == pytest.approx(1, abs=1e-12)


def test_mutinfo_bad_ensemble(files, capsys):
    code, _, err = run(["mutinfo", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", files["identity"], "--ensemble", files["bad_ensemble"]], capsys)
    assert code == 2


def test_tol_override_is_echoed(files, capsys):
    code, out, _ = run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}",
                        "--seeds", files["identity"], "--tol", "1e-7"], capsys)
    assert code == 0
    assert set(json.loads(out)["tolerances"].values()) == {1e-7}


def test_reports_are_byte_identical(files):
    cmd = [sys.executable, "-m", "covpovm.cli", "check", "--group", "cyclic:2", "--rep",
           f"file:{files['z2rep']}", "--seeds", files["identity"], "--split"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True, env={"COVPOVM_THREADS": "1", "PATH": ""}).stdout
    assert a == b and a


def test_report_round_trip(files, capsys):
    run(["check", "--group", "cyclic:2", "--rep", f"file:{files['z2rep']}", "--seeds", files["identity"],
         "--split", "--out", files["out"]], capsys)
    text = open(files["out"]).read()
    report = AnalysisReport.from_json(text)
    assert report.to_json() == text
    assert AnalysisReport.from_dict(json.loads(text)) == report


def test_round_floats():
    assert round_floats(1 / 3) == 0.333333333333
    assert round_floats([float("nan"), np.float64(0.1 + 0.2), np.int64(3)]) == [None, 0.3, 3]
    assert round_floats(-0.0) == 0.0


def test_matrix_codec():
    M = np.array([[1 + 2j, 0], [3, -1j]])
    assert np.array_equal(decode_matrix(encode_matrix(M)), M)
    assert np.array_equal(decode_matrix([[1, 2], [3, 4]]), np.array([[1, 2], [3, 4]], complex))
    with pytest.raises(ParseError):
        decode_matrix([[1, 2, 3]])
    with pytest.raises(ParseError):
        decode_matrix([["x"]])


def test_group_and_rep_files(tmp_path):
    g = cyclic_group(3)
    obj = group_to_json(g)
    assert group_from_json(obj).same_table(g)
    with pytest.raises(ParseError):
        group_from_json({"order": 4, "mul": obj["mul"]})
    path = write(tmp_path / "g.json", obj)
    assert load_group(f"file:{path}").same_table(g)
    assert load_group(path).same_table(g)
    with pytest.raises(ParseError):
        load_json(tmp_path / "missing.json")
    rep = load_rep("builtin:regular:cyclic:3", g, 1e-9)
    again = load_rep(write(tmp_path / "r.json", rep_to_json(rep)), g, 1e-9)
    assert np.allclose(again.matrices, rep.matrices)
    with pytest.raises(ParseError):
        load_rep("builtin:weyl:2", g, 1e-9)
    with pytest.raises(ParseError):
        load_rep("builtin:regular:cyclic:4", g, 1e-9)
    with pytest.raises(ParseError):
        load_rep("weyl", g, 1e-9)


def test_stabilizer_specs(tmp_path):
    assert parse_stabilizers("0,1;0") == [[0, 1], [0]]
    path = write(tmp_path / "s.json", {"subgroups": [[0], [0, 2]]})
    assert parse_stabilizers(path) == [[0], [0, 2]]
    with pytest.raises(ParseError):
        parse_stabilizers("0,x")


def test_console_script_version():
    out = subprocess.run(["covpovm", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
