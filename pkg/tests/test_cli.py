import json
import subprocess
import sys

import pytest

from dedalus import corpus
from dedalus.cli import main

RUN = ["--program", "reachability.dedalus", "--instance", "reachability.json", "--transitions", "24"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCheck:
    def test_valid(self, capsys):
        code, out, _ = run_cli(capsys, "check", "set_order.dedalus")
        assert code == 0 and "valid" in out

    def test_invalid(self, tmp_path, capsys):
        bad = tmp_path / "bad.dedalus"
        bad.write_text("p(U) <- q(U).\nt(U) <- not s(U).\n")
        code, out, _ = run_cli(capsys, "check", str(bad))
        assert code == 1
        assert "unsafe rule at line 2" in out

    def test_missing_file(self, capsys):
        code, _, err = run_cli(capsys, "check", "no/such/file.dedalus")
        assert code == 2 and "error" in err


class TestTransform:
    @pytest.mark.parametrize("mode", ["choice", "causal", "causfin"])
    def test_matches_golden(self, capsys, mode):
        code, out, _ = run_cli(capsys, "transform", "--program", "noncausal.dedalus", "--mode", mode)
        assert code == 0
        assert out == corpus.entry("noncausal").golden(mode).read_text(encoding="utf-8")

    def test_out_file(self, tmp_path, capsys):
        target = tmp_path / "p.txt"
        run_cli(capsys, "transform", "--program", "heaping.dedalus", "--out", str(target))
        assert len(target.read_text().splitlines()) == 15


class TestRuns:
    def test_simulate_deterministic(self, capsys):
        _, a, _ = run_cli(capsys, "simulate", *RUN, "--scheduler", "random", "--seed", "3")
        _, b, _ = run_cli(capsys, "simulate", *RUN, "--scheduler", "random", "--seed", "3")
        assert a == b
        assert len(json.loads(a)["transitions"]) == 24

    def test_seed_changes_run(self, capsys):
        outs = {run_cli(capsys, "simulate", *RUN, "--scheduler", "random", "--seed", str(s))[1] for s in range(4)}
        assert len(outs) > 1

    def test_trace(self, capsys):
        code, out, _ = run_cli(capsys, "trace", *RUN)
        facts = json.loads(out)
        assert code == 0 and ["start", "x", 0, "a"] in facts

    def test_verify(self, capsys):
        code, out, err = run_cli(capsys, "verify", *RUN, "--scheduler", "single", "--mode", "causfin")
        assert code == 0 and json.loads(out)["passed"] is True
        assert err.startswith("PASS")

    def test_bad_instance(self, tmp_path, capsys):
        inst = tmp_path / "i.json"
        inst.write_text('{"nodes": ["x"], "facts": {"x": [["marked", "a"]]}}')
        code, _, err = run_cli(capsys, "simulate", "--program", "reachability.dedalus", "--instance", str(inst))
        assert code == 2 and "idb" in err


class TestStableCheck:
    def args(self, program, model):
        p = corpus.fixture_paths()
        return ["stable-check", "--pure-program", str(p[program]), "--decl-input", str(p["decl"]), "--model", str(p[model])]

    def test_choice_accepts(self, capsys):
        code, out, _ = run_cli(capsys, *self.args("choice_program", "choice_model"))
        assert code == 0 and json.loads(out)["accepted"] is True

    def test_causal_rejects(self, capsys):
        code, out, err = run_cli(capsys, *self.args("causal_program", "causal_model"))
        doc = json.loads(out)
        assert code == 1 and not doc["accepted"]
        assert ["cand_b", "z", 1, "z", 0] in doc["missing"]
        assert err.startswith("rejected")


def test_goldens_check(capsys):
    code, out, _ = run_cli(capsys, "goldens", "--check")
    assert code == 0 and out == ""


def test_corpus_env(tmp_path, capsys, monkeypatch):
    (tmp_path / "only.dedalus").write_text("p(U) <- q(U).\n")
    monkeypatch.setenv("DEDALUS_CORPUS", str(tmp_path))
    code, out, _ = run_cli(capsys, "check", "only.dedalus")
    assert code == 0 and "valid" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dedalus", "check", "reachability.dedalus"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "async-deductive" in proc.stdout
