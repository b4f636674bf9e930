import stat

import pytest

from safemigrate.buildtools import FEEDBACK_CAP, TestSuite, cap_feedback, cargo_build, construct_suite
from safemigrate.errors import BuildEnvironmentError


def script(path, body):
    path.write_text("#!/bin/bash\n" + body)
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return path


@pytest.fixture
def programs(tmp_path):
    ref = script(tmp_path / "ref", 'echo "args: $*"; [ "$1" = fail ] && exit 3; exit 0\n')
    noisy = script(tmp_path / "noisy", 'echo "$RANDOM$RANDOM$RANDOM"\n')
    return ref, noisy


def test_construct_and_run(tmp_path, programs):
    ref, _ = programs
    kept = construct_suite(ref, [("a", ["x"], None), ("b", ["fail"], None), ("c", [], b"in")], tmp_path / "suite")
    assert kept == ["a", "b", "c"]
    suite = TestSuite.load(tmp_path / "suite")
    assert suite.ids == ["a", "b", "c"]
    results = {r.id: r for r in suite.run(ref)}
    assert all(r.passed for r in results.values())
    assert suite.vectors[1].expected_exit == 3


def test_exit_code_mismatch_fails(tmp_path, programs):
    ref, _ = programs
    construct_suite(ref, [("b", ["fail"], None)], tmp_path / "suite")
    # same stdout, different exit status
    other = script(tmp_path / "other", 'echo "args: $*"; exit 0\n')
    (r,) = TestSuite.load(tmp_path / "suite").run(other)
    assert not r.passed and "exit code 0, expected 3" in r.detail


def test_stdout_mismatch_fails(tmp_path, programs):
    ref, _ = programs
    construct_suite(ref, [("a", ["x"], None)], tmp_path / "suite")
    other = script(tmp_path / "other", 'echo "args: y"\n')
    (r,) = TestSuite.load(tmp_path / "suite").run(other)
    assert not r.passed and "stdout differs" in r.detail


def test_nondeterministic_vectors_are_discarded(tmp_path, programs):
    ref, noisy = programs
    assert construct_suite(noisy, [("n", [], None)], tmp_path / "suite") == []
    assert TestSuite.load(tmp_path / "suite").ids == []


def test_timeout_counts_as_failure(tmp_path, programs):
    ref, _ = programs
    construct_suite(ref, [("a", ["x"], None)], tmp_path / "suite")
    slow = script(tmp_path / "slow", "sleep 5\n")
    (r,) = TestSuite.load(tmp_path / "suite").run(slow, timeout=0.3)
    assert not r.passed and "timed out" in r.detail


def test_script_tests(tmp_path, programs):
    ref, _ = programs
    sdir = tmp_path / "suite" / "scripts"
    sdir.mkdir(parents=True)
    (sdir / "ok.sh").write_text('"$BIN" x | grep -q "args: x"\n')
    (sdir / "bad.sh").write_text("exit 1\n")
    suite = TestSuite.load(tmp_path / "suite")
    assert suite.ids == ["script:bad", "script:ok"]
    assert {r.id: r.passed for r in suite.run(ref)} == {"script:bad": False, "script:ok": True}


def test_cap_feedback():
    assert cap_feedback("short") == "short"
    long = "e" * (FEEDBACK_CAP * 3)
    capped = cap_feedback(long)
    assert len(capped.encode()) <= FEEDBACK_CAP + 100
    assert capped.startswith("eee") and "omitted" in capped


def test_cargo_build_diagnostics(tmp_path):
    (tmp_path / "src").mkdir()
    (tmp_path / "Cargo.toml").write_text('[package]\nname = "broken"\nversion = "0.1.0"\nedition = "2021"\n')
    (tmp_path / "src/main.rs").write_text("fn main() { let x: i32 = \"no\"; }\n")
    res = cargo_build(tmp_path)
    assert not res.ok and "mismatched types" in res.diagnostics
    (tmp_path / "src/main.rs").write_text("fn main() {}\n")
    res = cargo_build(tmp_path, release=True)
    assert res.ok and res.executable.is_file()


def test_missing_cargo(tmp_path, monkeypatch):
    monkeypatch.setenv("PATH", str(tmp_path))
    with pytest.raises(BuildEnvironmentError, match="cargo"):
        cargo_build(tmp_path)
