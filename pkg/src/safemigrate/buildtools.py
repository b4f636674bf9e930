"""Cargo invocation and the test-vector harness.

Suite directory format::

    vectors/<id>/invocation.json   {"argv": [...], "stdin": "<file>" | null}
    vectors/<id>/stdout            expected stdout bytes
    vectors/<id>/exit_code         expected exit code (decimal text)
    scripts/<name>.sh              script-style tests; run with $BIN set,
                                   pass iff exit status 0
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BuildEnvironmentError

log = logging.getLogger(__name__)

FEEDBACK_CAP = 8 * 1024


@dataclass
class BuildResult:
    ok: bool
    diagnostics: str = ""
    executable: Path | None = None


def _cargo_env() -> dict[str, str]:
    env = dict(os.environ)
    env["CARGO_TERM_COLOR"] = "never"
    return env


def cargo_build(crate_dir: Path, release: bool = False, timeout: float = 900) -> BuildResult:
    cmd = ["cargo", "build", "--message-format=json"]
    if release:
        cmd.append("--release")
    try:
        proc = subprocess.run(
            cmd, cwd=crate_dir, capture_output=True, timeout=timeout, env=_cargo_env()
        )
    except FileNotFoundError as exc:
        raise BuildEnvironmentError("cargo not found on PATH; install a Rust toolchain") from exc
    except subprocess.TimeoutExpired:
        return BuildResult(False, f"cargo build timed out after {timeout}s")
    errors: list[str] = []
    executable = None
    for line in proc.stdout.decode(errors="replace").splitlines():
        if not line.startswith("{"):
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            continue
        reason = msg.get("reason")
        if reason == "compiler-message":
            inner = msg.get("message", {})
            if inner.get("level") in ("error", "error: internal compiler error"):
                errors.append(inner.get("rendered") or inner.get("message", ""))
        elif reason == "compiler-artifact" and msg.get("executable"):
            executable = Path(msg["executable"])
    if proc.returncode != 0:
        text = "\n".join(errors) or proc.stderr.decode(errors="replace")
        return BuildResult(False, text.strip())
    return BuildResult(True, "", executable)


def cap_feedback(text: str, cap: int = FEEDBACK_CAP) -> str:
    """Head-biased truncation for prompt feedback."""
    data = text.encode()
    if len(data) <= cap:
        return text
    head = data[: cap - 200].decode(errors="ignore")
    tail = data[-150:].decode(errors="ignore")
    return f"{head}\n[... {len(data) - cap} bytes omitted ...]\n{tail}"


@dataclass
class TestVector:
    __test__ = False  # not a pytest class

    id: str
    argv: list[str]
    expected_stdout: bytes
    expected_exit: int
    stdin: bytes | None = None
    cwd: Path | None = None


@dataclass
class ScriptTest:
    id: str
    path: Path


@dataclass
class VectorResult:
    id: str
    passed: bool
    detail: str = ""


@dataclass
class TestSuite:
    __test__ = False

    root: Path
    vectors: list[TestVector] = field(default_factory=list)
    scripts: list[ScriptTest] = field(default_factory=list)

    @classmethod
    def load(cls, root: Path) -> "TestSuite":
        root = Path(root)
        suite = cls(root=root)
        vdir = root / "vectors"
        if vdir.is_dir():
            for d in sorted(p for p in vdir.iterdir() if p.is_dir()):
                inv = json.loads((d / "invocation.json").read_text())
                stdin = None
                if inv.get("stdin"):
                    stdin = (d / inv["stdin"]).read_bytes()
                suite.vectors.append(
                    TestVector(
                        id=d.name,
                        argv=list(inv.get("argv", [])),
                        expected_stdout=(d / "stdout").read_bytes(),
                        expected_exit=int((d / "exit_code").read_text().strip()),
                        stdin=stdin,
                        cwd=d,
                    )
                )
        sdir = root / "scripts"
        if sdir.is_dir():
            for p in sorted(sdir.glob("*.sh")):
                suite.scripts.append(ScriptTest(id=f"script:{p.stem}", path=p))
        return suite

    @property
    def ids(self) -> list[str]:
        return [v.id for v in self.vectors] + [s.id for s in self.scripts]

    def run(self, executable: Path, timeout: float = 30.0) -> list[VectorResult]:
        results = [run_vector(executable, v, timeout) for v in self.vectors]
        results += [run_script(executable, s, timeout) for s in self.scripts]
        return results


def run_vector(executable: Path, vec: TestVector, timeout: float) -> VectorResult:
    try:
        proc = subprocess.run(
            [str(executable), *vec.argv],
            input=vec.stdin if vec.stdin is not None else b"",
            capture_output=True,
            timeout=timeout,
            cwd=vec.cwd,
        )
    except subprocess.TimeoutExpired:
        return VectorResult(vec.id, False, f"timed out after {timeout}s")
    if proc.returncode < 0:
        return VectorResult(vec.id, False, f"killed by signal {-proc.returncode}")
    problems = []
    if proc.returncode != vec.expected_exit:
        problems.append(f"exit code {proc.returncode}, expected {vec.expected_exit}")
    if proc.stdout != vec.expected_stdout:
        problems.append(
            f"stdout differs: got {proc.stdout[:200]!r}, expected {vec.expected_stdout[:200]!r}"
        )
    return VectorResult(vec.id, not problems, "; ".join(problems))


def run_script(executable: Path, script: ScriptTest, timeout: float) -> VectorResult:
    env = dict(os.environ, BIN=str(executable))
    try:
        proc = subprocess.run(
            ["bash", str(script.path)], capture_output=True, timeout=timeout, env=env, cwd=script.path.parent
        )
    except subprocess.TimeoutExpired:
        return VectorResult(script.id, False, f"timed out after {timeout}s")
    ok = proc.returncode == 0
    detail = "" if ok else f"exit {proc.returncode}: {proc.stdout[-300:]!r} {proc.stderr[-300:]!r}"
    return VectorResult(script.id, ok, detail)


@dataclass
class SuiteRun:
    build: BuildResult
    results: list[VectorResult] = field(default_factory=list)

    @property
    def failing(self) -> set[str]:
        return {r.id for r in self.results if not r.passed}

    @property
    def passing(self) -> set[str]:
        return {r.id for r in self.results if r.passed}

    @property
    def ok(self) -> bool:
        return self.build.ok and not self.failing

    def feedback(self) -> str:
        if not self.build.ok:
            return self.build.diagnostics
        return "\n".join(f"vector {r.id} failed: {r.detail}" for r in self.results if not r.passed)


def run_test_suite(crate_dir: Path, suite: TestSuite, timeout: float = 30.0) -> SuiteRun:
    """Release build, then every vector against the produced binary."""
    build = cargo_build(crate_dir, release=True)
    if not build.ok:
        return SuiteRun(build)
    if build.executable is None:
        return SuiteRun(BuildResult(False, "release build produced no executable"))
    return SuiteRun(build, suite.run(build.executable, timeout))


def construct_suite(
    reference: Path, invocations: list[tuple[str, list[str], bytes | None]], dest: Path, timeout: float = 30.0
) -> list[str]:
    """Record oracle outputs of ``reference`` into a suite directory.

    Each invocation runs twice; crashing or non-reproducible ones are
    dropped.  Returns the ids that were kept.
    """
    kept = []
    vdir = Path(dest) / "vectors"
    vdir.mkdir(parents=True, exist_ok=True)
    for vid, argv, stdin in invocations:
        runs = []
        for _ in range(2):
            try:
                proc = subprocess.run(
                    [str(reference), *argv], input=stdin or b"", capture_output=True, timeout=timeout
                )
            except subprocess.TimeoutExpired:
                runs = None
                break
            runs.append((proc.returncode, proc.stdout))
        if not runs or runs[0][0] < 0 or runs[0] != runs[1]:
            log.info("discarding vector %s (crash or nondeterministic output)", vid)
            continue
        d = vdir / vid
        if d.exists():
            shutil.rmtree(d)
        d.mkdir()
        inv = {"argv": argv, "stdin": "stdin.bin" if stdin is not None else None}
        if stdin is not None:
            (d / "stdin.bin").write_bytes(stdin)
        (d / "invocation.json").write_text(json.dumps(inv))
        (d / "stdout").write_bytes(runs[0][1])
        (d / "exit_code").write_text(f"{runs[0][0]}\n")
        kept.append(vid)
    return kept
