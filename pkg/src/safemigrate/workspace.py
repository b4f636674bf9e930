"""On-disk pipeline layout, file snapshots and resumable state.

Layout under a workspace root::

    c/                original C sources
    rust/             transpiled crate, never modified after import
    rust_test/        live scaffold the compile-and-test gate runs against
    rust_safe/        crate copy holding every accepted pair
    rust_safe_remap/  crate after wrapper elimination (phase 2 works here)
    state/            pipeline.state, snapshots, logs, test vectors
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import os
import shutil
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidArgument, NotFound, StateCorrupt, WorkspaceLocked

log = logging.getLogger(__name__)

LAYOUT = ("c", "rust", "rust_test", "rust_safe", "rust_safe_remap", "state")
STATE_HEADER = "# pipeline state v1"
IGNORED_DIRS = {"target", ".git"}


class Phase(enum.Enum):
    Phase1Struct = "Phase1Struct"
    Phase1Function = "Phase1Function"
    TDWE = "TDWE"
    Phase2 = "Phase2"
    Done = "Done"


PHASE_ORDER = list(Phase)


@dataclass
class PipelineState:
    completed_functions: set[str] = field(default_factory=set)
    failed_functions: set[str] = field(default_factory=set)
    failed_structs: set[str] = field(default_factory=set)
    completed_tasks: set[str] = field(default_factory=set)
    phase: Phase = Phase.Phase1Struct

    def encode(self) -> str:
        lines = [STATE_HEADER, f"phase={self.phase.value}"]
        for key, values in (
            ("completed_function", self.completed_functions),
            ("failed_function", self.failed_functions),
            ("failed_struct", self.failed_structs),
            ("completed_task", self.completed_tasks),
        ):
            lines.extend(f"{key}={v}" for v in sorted(values))
        return "\n".join(lines) + "\n"

    @classmethod
    def decode(cls, text: str) -> "PipelineState":
        lines = text.splitlines()
        if not lines or lines[0] != STATE_HEADER:
            raise StateCorrupt("missing state header")
        state = cls()
        seen_phase = False
        targets = {
            "completed_function": state.completed_functions,
            "failed_function": state.failed_functions,
            "failed_struct": state.failed_structs,
            "completed_task": state.completed_tasks,
        }
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep or not value:
                raise StateCorrupt(f"line {lineno}: expected key=value, got {line!r}")
            if key == "phase":
                try:
                    state.phase = Phase(value)
                except ValueError:
                    raise StateCorrupt(f"line {lineno}: unknown phase {value!r}") from None
                seen_phase = True
            elif key in targets:
                targets[key].add(value)
            else:
                raise StateCorrupt(f"line {lineno}: unknown key {key!r}")
        if not seen_phase:
            raise StateCorrupt("no phase record")
        overlap = state.completed_functions & state.failed_functions
        if overlap:
            raise StateCorrupt(f"functions both completed and failed: {sorted(overlap)}")
        return state


@dataclass
class Snapshot:
    id: str
    entries: dict[str, bytes]
    created_at: float
    # When set, restore also deletes files under this directory that the
    # snapshot does not list (whole-tree snapshots).
    tree_scope: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "created_at": self.created_at,
                "tree_scope": self.tree_scope,
                "entries": {k: base64.b64encode(v).decode() for k, v in sorted(self.entries.items())},
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Snapshot":
        d = json.loads(text)
        return cls(
            id=d["id"],
            entries={k: base64.b64decode(v) for k, v in d["entries"].items()},
            created_at=d["created_at"],
            tree_scope=d.get("tree_scope"),
        )


def iter_tree_files(directory: Path) -> list[Path]:
    """Every regular file under ``directory`` except build output, sorted."""
    out = []
    if not directory.exists():
        return out
    for dirpath, dirnames, filenames in os.walk(directory):
        dirnames[:] = sorted(d for d in dirnames if d not in IGNORED_DIRS)
        for fn in sorted(filenames):
            out.append(Path(dirpath) / fn)
    return sorted(out)


def tree_hash(directory: Path) -> str:
    """Content hash over sorted (relative path, bytes) pairs."""
    h = hashlib.sha256()
    directory = Path(directory)
    for p in iter_tree_files(directory):
        rel = p.relative_to(directory).as_posix().encode()
        data = p.read_bytes()
        h.update(rel + b"\0" + str(len(data)).encode() + b"\0" + data)
    return h.hexdigest()


def copy_crate(src: Path, dst: Path) -> None:
    """Replace ``dst`` with a copy of ``src`` minus build output."""
    if dst.exists():
        shutil.rmtree(dst)
    shutil.copytree(src, dst, ignore=shutil.ignore_patterns(*IGNORED_DIRS))


class Workspace:
    def __init__(self, root: Path | str):
        self.root = Path(root).resolve()
        self.c_src = self.root / "c"
        self.rust_base = self.root / "rust"
        self.rust_test = self.root / "rust_test"
        self.rust_safe = self.root / "rust_safe"
        self.rust_safe_remap = self.root / "rust_safe_remap"
        self.state_dir = self.root / "state"
        self.test_suite = self.state_dir / "tests"
        self.state_file = self.state_dir / "pipeline.state"
        self.snapshot_dir = self.state_dir / "snapshots"
        self._snapshots: dict[str, Snapshot] = {}

    # -- layout -----------------------------------------------------------

    def exists(self) -> bool:
        return self.state_dir.is_dir() and self.rust_base.is_dir()

    def create_layout(self) -> None:
        for name in LAYOUT:
            (self.root / name).mkdir(parents=True, exist_ok=True)
        self.snapshot_dir.mkdir(exist_ok=True)

    def rel(self, path: Path | str) -> str:
        p = Path(path)
        if p.is_absolute():
            p = p.resolve().relative_to(self.root)
        return p.as_posix()

    def abs(self, rel: str) -> Path:
        p = (self.root / rel).resolve()
        if self.root not in p.parents and p != self.root:
            raise InvalidArgument(f"path escapes workspace: {rel}")
        return p

    # -- snapshots --------------------------------------------------------

    def snapshot_files(self, paths: list[str], snap_id: str | None = None) -> Snapshot:
        entries = {}
        for rel in paths:
            rel = self.rel(rel)
            p = self.abs(rel)
            if not p.is_file():
                raise NotFound(f"cannot snapshot missing path: {rel}")
            entries[rel] = p.read_bytes()
        snap = Snapshot(id=snap_id or f"snap-{uuid.uuid4().hex[:12]}", entries=entries, created_at=time.time())
        self._register(snap)
        return snap

    def snapshot_tree(self, directory: Path | str, snap_id: str | None = None) -> Snapshot:
        directory = self.abs(self.rel(directory))
        files = [self.rel(p) for p in iter_tree_files(directory)]
        snap = self.snapshot_files(files, snap_id)
        snap.tree_scope = self.rel(directory)
        self._register(snap)
        return snap

    def _register(self, snap: Snapshot) -> None:
        self._snapshots[snap.id] = snap
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        (self.snapshot_dir / f"{snap.id}.json").write_text(snap.to_json())

    def get_snapshot(self, snap_id: str) -> Snapshot:
        if snap_id in self._snapshots:
            return self._snapshots[snap_id]
        path = self.snapshot_dir / f"{snap_id}.json"
        if not path.is_file():
            raise NotFound(f"unknown snapshot id: {snap_id}")
        snap = Snapshot.from_json(path.read_text())
        self._snapshots[snap_id] = snap
        return snap

    def has_snapshot(self, snap_id: str) -> bool:
        return snap_id in self._snapshots or (self.snapshot_dir / f"{snap_id}.json").is_file()

    def restore(self, snap: Snapshot | str) -> None:
        if isinstance(snap, str):
            snap = self.get_snapshot(snap)
        elif not self.has_snapshot(snap.id):
            raise NotFound(f"unknown snapshot id: {snap.id}")
        for rel, data in snap.entries.items():
            p = self.abs(rel)
            if p.is_file() and p.read_bytes() == data:
                continue
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(data)
        if snap.tree_scope is not None:
            for p in iter_tree_files(self.abs(snap.tree_scope)):
                if self.rel(p) not in snap.entries:
                    p.unlink()

    def drop_snapshot(self, snap_id: str) -> None:
        self._snapshots.pop(snap_id, None)
        path = self.snapshot_dir / f"{snap_id}.json"
        if path.exists():
            path.unlink()

    def truncate_to_length(self, path: str | Path, length: int) -> None:
        p = self.abs(self.rel(path))
        size = p.stat().st_size
        if length < 0 or length > size:
            raise InvalidArgument(f"cannot truncate {self.rel(p)} ({size} bytes) to {length}")
        if length == size:
            return
        with open(p, "r+b") as fh:
            fh.truncate(length)

    # -- state ------------------------------------------------------------

    def persist_state(self, state: PipelineState) -> None:
        self.state_dir.mkdir(parents=True, exist_ok=True)
        tmp = self.state_file.with_suffix(".tmp")
        tmp.write_text(state.encode())
        os.replace(tmp, self.state_file)

    def load_state(self) -> PipelineState:
        if not self.state_file.exists():
            return PipelineState()
        return PipelineState.decode(self.state_file.read_text())

    # -- locking ----------------------------------------------------------

    def acquire_lock(self) -> "WorkspaceLock":
        return WorkspaceLock(self.state_dir / "lock")


class WorkspaceLock:
    """Exclusive per-workspace lock; stale locks of dead processes are taken over."""

    def __init__(self, path: Path):
        self.path = path
        self.held = False

    def __enter__(self) -> "WorkspaceLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise WorkspaceLocked(f"workspace busy (lock file {self.path})") from None
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            self.held = True
            return self
        raise WorkspaceLocked(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip() or "0")
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def __exit__(self, *exc) -> None:
        if self.held:
            self.path.unlink(missing_ok=True)
            self.held = False
