import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ltn.cli import main
from ltn.grounding import GroundingConfig, init_env

from conftest import CORPUS, load_corpus

EXP1 = str(CORPUS / "smokers_exp1.kb")
AXIOMS = str(CORPUS / "smokers_axioms.kb")
EXP2 = str(CORPUS / "smokers_exp2.kb")
EXAMPLE1 = str(CORPUS / "example1_documents.kb")


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def small_model(tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    assert run("train", EXP2, "--n", 6, "--k", 3, "--steps", 60, "--seed", 2, "-o", out) == 0
    return out


class TestTrain:
    def test_zero_steps_writes_seeded_initialization(self, tmp_path):
        assert run("train", EXP1, "--n", 4, "--k", 2, "--steps", 0, "--seed", 5, "-o", tmp_path) == 0
        payload = json.loads((tmp_path / "model.json").read_text())
        assert payload["format"] == "ltn-model" and payload["version"] == 1
        expected = init_env(load_corpus("smokers_exp1.kb").signature, GroundingConfig(4, 2), seed=5)
        got = payload["grounding"]["constants"]["a"]["vector"]
        assert got["shape"] == [4] and got["data"] == list(expected.constants["a"].vector)
        rows = list(csv.reader((tmp_path / "trace.csv").open()))
        assert rows[0] == ["restart", "step", "loss", "mean_truth"] and len(rows) == 2

    def test_files_are_unioned(self, tmp_path):
        assert run("train", EXP1, AXIOMS, "--n", 4, "--k", 2, "--steps", 3, "-o", tmp_path / "a") == 0
        assert run("train", EXP2, "--n", 4, "--k", 2, "--steps", 3, "-o", tmp_path / "b") == 0
        assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert run("train", EXP2, "--n", 4, "--k", 2, "--steps", 20, "--restarts", 2, "--seed", 3,
                       "-o", tmp_path / name) == 0
        for f in ("model.json", "trace.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_parse_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.kb"
        bad.write_text("pred P/1.\nconst a.\nP(a\n")
        assert run("train", bad, "-o", tmp_path) == 2
        err = capsys.readouterr().err
        assert "line 3" in err and "^" in err

    def test_dim_conflict(self, tmp_path, capsys):
        assert run("train", EXAMPLE1, "--n", 5, "--steps", 1, "-o", tmp_path) == 2
        assert "dim 9" in capsys.readouterr().err

    def test_non_finite_exit_code(self, tmp_path, capsys):
        kb = tmp_path / "zero.kb"
        kb.write_text("dim 2. pred Sim/2. const a, b.\nground a = [0, 0]. ground b = [1, 0].\n"
                      "ground Sim = builtin(cosine).\nSim(a, b).\n")
        assert run("train", kb, "--steps", 2, "-o", tmp_path) == 3
        assert "Sim(a, b)" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("train", tmp_path / "nope.kb", "-o", tmp_path) == 2


class TestReport:
    def test_outputs(self, small_model, tmp_path, capsys):
        assert run("report", small_model / "model.json", EXP2, "-o", tmp_path) == 0
        text = capsys.readouterr().out
        assert (tmp_path / "report.txt").read_text() == text
        rows = list(csv.reader((tmp_path / "completion.csv").open()))
        assert rows[0] == ["atom", "truth"]
        assert len(rows) - 1 == 14 + 14 + 14 * 14
        for atom, value in rows[1:]:
            assert len(value.split(".")[1]) == 2 and 0.0 <= float(value) <= 1.0
        axioms = list(csv.DictReader((tmp_path / "axioms.csv").open()))
        assert len(axioms) == 5
        assert {"degree[a..h]", "degree[i..n]"} <= set(axioms[0])
        assert "group a..h" in text and "group i..n" in text

    def test_pretty_table_matches_csv(self, small_model, tmp_path, capsys):
        run("report", small_model / "model.json", EXP2, "-o", tmp_path)
        text = capsys.readouterr().out
        values = dict(csv.reader((tmp_path / "completion.csv").open()))
        row_a = next(line for line in text.splitlines() if line.startswith("a "))
        cells = row_a.replace("|", " ").replace("*", " ").split()[1:]
        assert cells[0] == values["S(a)"] and cells[1] == values["C(a)"]
        assert cells[2:] == [values[f"F(a,{m})"] for m in "abcdefgh"]

    def test_zero_output_weights_give_half(self, small_model, tmp_path, capsys):
        payload = json.loads((small_model / "model.json").read_text())
        for g in payload["grounding"]["predicates"].values():
            g["u"]["data"] = [0.0] * len(g["u"]["data"])
        model = tmp_path / "model.json"
        model.write_text(json.dumps(payload))
        assert run("report", model, EXP2, "-o", tmp_path) == 0
        rows = list(csv.reader((tmp_path / "completion.csv").open()))[1:]
        assert {v for _, v in rows} == {"0.50"}

    def test_byte_deterministic(self, small_model, tmp_path):
        for name in ("a", "b"):
            run("report", small_model / "model.json", EXP2, "-o", tmp_path / name)
        for f in ("completion.csv", "axioms.csv", "report.txt"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_signature_mismatch(self, small_model):
        assert run("report", small_model / "model.json", EXAMPLE1) == 2

    def test_not_a_model(self, tmp_path):
        (tmp_path / "m.json").write_text("{}")
        assert run("report", tmp_path / "m.json", EXP2) == 2


class TestQuery:
    def test_ground(self, small_model, capsys):
        assert run("query", small_model / "model.json", "S(a)") == 0
        value = float(capsys.readouterr().out.split()[0])
        assert 0.0 <= value <= 1.0

    def test_free_variables_list_instances(self, small_model, capsys):
        assert run("query", small_model / "model.json", "S(x) -> C(x)") == 0
        lines = capsys.readouterr().out.splitlines()
        assert "14 instances" in lines[0] and len(lines) == 15

    def test_errors(self, small_model, capsys):
        assert run("query", small_model / "model.json", "S(a") == 2
        assert "^" in capsys.readouterr().err
        assert run("query", small_model / "model.json", "Q(a)") == 2
        assert run("query", small_model / "model.json", "exists y: F(a, y)") == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ltn", "--help"], capture_output=True, text=True, check=True)
    assert "train" in out.stdout and "report" in out.stdout and "query" in out.stdout


def test_report_values_match_library(small_model, capsys):
    from ltn.cli import load_model
    env, _, _ = load_model(small_model / "model.json")
    run("query", small_model / "model.json", "F(a, b)")
    shown = float(capsys.readouterr().out.split()[0])
    from ltn.grounding import ground_atom
    direct = ground_atom("F", [env.constants["a"].vector, env.constants["b"].vector], env)
    assert shown == pytest.approx(direct, abs=0.005)
    assert np.isfinite(direct)
