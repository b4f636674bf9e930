"""Shared fixture builders for the test suite."""

from __future__ import annotations

import json
import shutil
import subprocess
from pathlib import Path

from safemigrate.buildtools import cargo_build, construct_suite
from safemigrate.workspace import copy_crate, tree_hash

FIXTURES = Path(__file__).parent / "fixtures"

TALLY_INVOCATIONS = [
    ("none", []),
    ("one", ["hello"]),
    ("two", ["hello", "tree"]),
    ("four", ["a", "b", "c", "d"]),
    ("eee", ["eerie", "beet", "e"]),
]


def compile_c(c_dir: Path, out: Path) -> Path:
    sources = sorted(str(p) for p in Path(c_dir).glob("*.c"))
    subprocess.run(["gcc", "-O0", "-w", "-o", str(out), *sources], check=True)
    return out


def tally_inputs(dest: Path) -> tuple[Path, Path, Path]:
    """C sources, transpiled crate and a suite recorded from the C binary."""
    dest = Path(dest)
    c_dir = dest / "c"
    rust_dir = dest / "rust"
    tests_dir = dest / "tests"
    shutil.copytree(FIXTURES / "tally" / "c", c_dir)
    copy_crate(FIXTURES / "tally" / "rust", rust_dir)
    ref = compile_c(c_dir, dest / "tally_ref")
    kept = construct_suite(ref, [(vid, argv, None) for vid, argv in TALLY_INVOCATIONS], tests_dir)
    assert len(kept) == len(TALLY_INVOCATIONS)
    return c_dir, rust_dir, tests_dir


def crate_suite(crate_src: Path, dest: Path, invocations: list[tuple[str, list[str]]] | None = None) -> tuple[Path, Path]:
    """Copy a fixture crate and record its own outputs as the suite.

    Used for fixtures without a C original: the unmodified crate is the
    reference behaviour.
    """
    dest = Path(dest)
    crate = dest / "crate"
    copy_crate(Path(crate_src), crate)
    if invocations is None:
        inv_file = Path(crate_src) / "invocations.json"
        invocations = [tuple(x) for x in json.loads(inv_file.read_text())] if inv_file.is_file() else [("default", [])]
    build = cargo_build(crate, release=True)
    assert build.ok, build.diagnostics
    ref = dest / "reference"
    shutil.copy2(build.executable, ref)
    suite_dir = dest / "suite"
    kept = construct_suite(ref, [(vid, list(argv), None) for vid, argv in invocations], suite_dir)
    assert kept, "no usable vectors"
    return crate, suite_dir


def source_hash(directory: Path) -> str:
    return tree_hash(directory)


def staged_crate(fixture: Path, dest: Path):
    """Workspace holding ``fixture`` as its remap crate, plus the fixture's own suite.

    Returns (workspace, crate_dir, suite).
    """
    from safemigrate.buildtools import TestSuite
    from safemigrate.workspace import Workspace

    dest = Path(dest)
    _, suite_dir = crate_suite(fixture, dest / "ref")
    ws = Workspace(dest / "ws")
    ws.create_layout()
    copy_crate(Path(fixture), ws.rust_safe_remap)
    # the first build writes Cargo.lock; do it before anyone hashes the tree
    assert cargo_build(ws.rust_safe_remap).ok
    return ws, ws.rust_safe_remap, TestSuite.load(suite_dir)
