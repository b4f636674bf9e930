"""The Phase-2 agent loop: task discovery, stall detection and the verification gate."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from string import Template

from . import lexer
from .buildtools import TestSuite, cargo_build, run_test_suite
from .errors import MissingScenario, ProviderError, StateCorrupt
from .provider import Provider, ProviderTurn, TurnKind, load_template
from .source_model import build_call_graph, leaf_first_order, records_from_text, source_files
from .tdwe import scan_unsafe_casts
from .tools import TOOL_MANIFEST, ToolResult, ToolSuite, static_mut_names
from .workspace import PipelineState, Workspace

log = logging.getLogger(__name__)

MAX_ITER = 40
COMPILE_STREAK_LIMIT = 5
PROVIDER_RETRIES = 2
STALL_PERIODS = (1, 2, 3)


class TaskKind(enum.Enum):
    StaticMut = "StaticMut"
    WrapperRemoval = "WrapperRemoval"
    StructMigration = "StructMigration"
    StructUseMigrate = "StructUseMigrate"
    FunctionTranslate = "FunctionTranslate"
    DeadCode = "DeadCode"


KIND_ORDER = {k: i for i, k in enumerate(TaskKind)}
_ID_PREFIX = {
    TaskKind.StaticMut: "static_mut",
    TaskKind.WrapperRemoval: "wrapper_removal",
    TaskKind.StructMigration: "struct_migration",
    TaskKind.StructUseMigrate: "struct_use",
    TaskKind.FunctionTranslate: "function_translate",
    TaskKind.DeadCode: "dead_code",
}


class TaskState(enum.Enum):
    Pending = "Pending"
    InProgress = "InProgress"
    Completed = "Completed"
    Failed = "Failed"


@dataclass
class TransformationTask:
    id: str
    kind: TaskKind
    target: str
    state: TaskState = TaskState.Pending
    iterations: int = 0
    pre_task_snapshot: str | None = None

    @classmethod
    def make(cls, kind: TaskKind, target: str) -> "TransformationTask":
        return cls(f"{_ID_PREFIX[kind]}:{target}", kind, target)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "target": self.target,
            "state": self.state.value,
            "iterations": self.iterations,
            "pre_task_snapshot": self.pre_task_snapshot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformationTask":
        return cls(
            d["id"], TaskKind(d["kind"]), d["target"], TaskState(d["state"]), d.get("iterations", 0),
            d.get("pre_task_snapshot"),
        )


@dataclass
class Baseline:
    passing: frozenset[str]
    all_vectors: frozenset[str]

    def to_json(self) -> str:
        return json.dumps({"passing": sorted(self.passing), "all": sorted(self.all_vectors)}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Baseline":
        d = json.loads(text)
        return cls(frozenset(d["passing"]), frozenset(d["all"]))


def record_baseline(crate_dir: Path, suite: TestSuite, timeout: float = 30.0) -> Baseline:
    run = run_test_suite(crate_dir, suite, timeout)
    ids = frozenset(suite.ids)
    if not run.build.ok:
        return Baseline(frozenset(), ids)
    return Baseline(frozenset(run.passing), ids)


# ---------------------------------------------------------------------------
# stall detection


@dataclass(frozen=True)
class ToolCallFingerprint:
    tool: str
    arg_hash: str


def fingerprint(tool: str, args) -> ToolCallFingerprint:
    blob = json.dumps(args, sort_keys=True, separators=(",", ":"), default=str)
    return ToolCallFingerprint(str(tool), hashlib.sha256(blob.encode()).hexdigest()[:16])


class HintKind(enum.Enum):
    CompileStreak = "CompileStreak"
    Period1 = "Period1"
    Period2 = "Period2"
    Period3 = "Period3"


def detect_stall(history: list[ToolCallFingerprint], compile_fail_streak: int) -> HintKind | None:
    """Pure check over the current window; periods need two full repetitions."""
    if compile_fail_streak >= COMPILE_STREAK_LIMIT:
        return HintKind.CompileStreak
    for p in STALL_PERIODS:
        if len(history) >= 2 * p and history[-p:] == history[-2 * p : -p]:
            return HintKind(f"Period{p}")
    return None


class StallDetector:
    """Feeds :func:`detect_stall` and clears the window after each detection."""

    def __init__(self) -> None:
        self.history: list[ToolCallFingerprint] = []
        self.compile_fail_streak = 0

    def observe(self, fp: ToolCallFingerprint, compile_ok: bool | None = None) -> HintKind | None:
        self.history.append(fp)
        if compile_ok is False:
            self.compile_fail_streak += 1
        elif compile_ok is True:
            self.compile_fail_streak = 0
        hint = detect_stall(self.history, self.compile_fail_streak)
        if hint is not None:
            self.history.clear()
            if hint is HintKind.CompileStreak:
                self.compile_fail_streak = 0
        return hint


def hint_text(hint: HintKind, kind: TaskKind) -> str:
    table = json.loads(load_template("hints.json"))
    if hint is HintKind.CompileStreak:
        streak = table["compile_streak"]
        return streak.get(kind.value, streak["default"])
    return table[hint.value]


# ---------------------------------------------------------------------------
# verification gate


class GateStatus(enum.Enum):
    Pass = "Pass"
    FailCompile = "FailCompile"
    FailTests = "FailTests"


@dataclass
class GateResult:
    status: GateStatus
    diagnostics: str = ""
    regressions: frozenset[str] = frozenset()


def verification_gate(crate_dir: Path, suite: TestSuite, baseline: Baseline, timeout: float = 30.0) -> GateResult:
    """Debug build, then release build and every vector; no baseline-passing vector may fail."""
    debug = cargo_build(crate_dir)
    if not debug.ok:
        return GateResult(GateStatus.FailCompile, debug.diagnostics or "debug build failed")
    run = run_test_suite(crate_dir, suite, timeout)
    if not run.build.ok:
        return GateResult(GateStatus.FailCompile, run.build.diagnostics or "release build failed")
    regressions = frozenset(baseline.passing - run.passing)
    if regressions:
        lines = [r.detail for r in run.results if r.id in regressions]
        text = "regressed vectors: " + ", ".join(sorted(regressions)) + "\n" + "\n".join(lines)
        return GateResult(GateStatus.FailTests, text, regressions)
    return GateResult(GateStatus.Pass)


# ---------------------------------------------------------------------------
# the loop


def task_prompt(task: TransformationTask) -> str:
    instructions = json.loads(load_template("phase2_tasks.json"))[task.kind.value]
    return Template(load_template("phase2_system.txt")).substitute(
        kind=task.kind.value,
        target=task.target,
        instructions=Template(instructions).substitute(target=task.target),
    )


def snapshot_id(task: TransformationTask) -> str:
    return "task-" + re.sub(r"[^A-Za-z0-9_.-]", "_", task.id)


def transcript_path(ws: Workspace, task: TransformationTask) -> Path:
    return ws.state_dir / "phase2" / (re.sub(r"[^A-Za-z0-9_.-]", "_", task.id) + ".log")


def _step(provider: Provider, conversation: list[dict], retries: int) -> ProviderTurn | str:
    """One provider turn, retrying transient failures; a string is the final error."""
    last = ""
    for _ in range(retries + 1):
        try:
            return provider.agent_step(conversation, TOOL_MANIFEST)
        except MissingScenario:
            raise
        except ProviderError as exc:
            last = str(exc)
    return last


def run_task(
    task: TransformationTask,
    provider: Provider,
    tools: ToolSuite,
    baseline: Baseline,
    *,
    max_iter: int = MAX_ITER,
    timeout: float = 30.0,
    provider_retries: int = PROVIDER_RETRIES,
) -> TransformationTask:
    """Drive one task to Completed (gate passed) or Failed (tree restored)."""
    ws, crate_dir = tools.ws, tools.crate_dir
    sid = snapshot_id(task)
    if not ws.has_snapshot(sid):
        ws.snapshot_tree(crate_dir, snap_id=sid)
    task.pre_task_snapshot = sid
    task.state = TaskState.InProgress
    tools.scope = sid
    conversation: list[dict] = [{"role": "system", "content": task_prompt(task)}]
    conversation.append({"role": "user", "content": f"Start the {task.kind.value} task on `{task.target}`."})
    detector = StallDetector()
    log_path = transcript_path(ws, task)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    events: list[dict] = []

    def finish(state: TaskState, note: str) -> TransformationTask:
        if state is TaskState.Failed:
            ws.restore(sid)
        ws.drop_snapshot(sid)
        task.state = state
        events.append({"event": "finish", "state": state.value, "note": note, "iterations": task.iterations})
        log_path.write_text(
            json.dumps({"task": task.to_dict(), "conversation": conversation, "events": events}, indent=1) + "\n"
        )
        log.info("task %s -> %s after %d iterations (%s)", task.id, state.value, task.iterations, note)
        return task

    while task.iterations < max_iter:
        task.iterations += 1
        turn = _step(provider, conversation, provider_retries)
        if isinstance(turn, str):
            return finish(TaskState.Failed, f"provider failure: {turn}")
        if turn.kind is not TurnKind.ToolCall:
            conversation.append({"role": "assistant", "content": turn.text})
            conversation.append(
                {"role": "user", "content": "The task is not finished until you call complete_task and it passes."}
            )
            continue
        conversation.append({"role": "assistant", "content": turn.text, "tool_call": {"name": turn.name, "args": turn.args}})
        compile_ok: bool | None = None
        if turn.name == "complete_task":
            gate = verification_gate(crate_dir, tools.suite, baseline, timeout)
            events.append({"event": "gate", "iteration": task.iterations, "status": gate.status.value})
            if gate.status is GateStatus.Pass:
                conversation.append({"role": "tool", "name": "complete_task", "content": "verification passed"})
                return finish(TaskState.Completed, "verification passed")
            compile_ok = gate.status is not GateStatus.FailCompile
            result = ToolResult("complete_task", False, diagnostics=f"verification {gate.status.value}:\n{gate.diagnostics}")
        else:
            result = tools.dispatch(turn.name, turn.args)
            if turn.name == "compile":
                compile_ok = result.ok
        conversation.append({"role": "tool", "name": str(turn.name), "content": result.render()})
        hint = detector.observe(fingerprint(str(turn.name), turn.args), compile_ok)
        if hint is not None:
            events.append({"event": "hint", "iteration": task.iterations, "hint": hint.value})
            conversation.append({"role": "user", "content": hint_text(hint, task.kind)})
    return finish(TaskState.Failed, "iteration budget exhausted")


# ---------------------------------------------------------------------------
# discovery and orchestration


def _texts(crate_dir: Path) -> dict[str, str]:
    return {p.relative_to(crate_dir).as_posix(): p.read_text() for p in source_files(crate_dir, (".rs",))}


def call_order(crate_dir: Path) -> list[str]:
    records = []
    for rel, text in _texts(crate_dir).items():
        records.extend(records_from_text(text, rel))
    return leaf_first_order(build_call_graph(records)).sequence


def discover_tasks(crate_dir: Path, state: PipelineState, deferred_wrappers: list[str]) -> list[TransformationTask]:
    """Initial task list; StructUseMigrate tasks are discovered later."""
    crate_dir = Path(crate_dir)
    tasks = [TransformationTask.make(TaskKind.StaticMut, n) for n in static_mut_names(crate_dir)]
    for name in sorted(set(deferred_wrappers)):
        if scan_unsafe_casts(name, crate_dir):
            tasks.append(TransformationTask.make(TaskKind.WrapperRemoval, name))
    tasks += [TransformationTask.make(TaskKind.StructMigration, s) for s in sorted(state.failed_structs)]
    order = call_order(crate_dir)
    rank = {n: i for i, n in enumerate(order)}
    retained = sorted(state.failed_functions, key=lambda n: (rank.get(n, len(rank)), n))
    tasks += [TransformationTask.make(TaskKind.FunctionTranslate, n) for n in retained]
    tasks.append(TransformationTask.make(TaskKind.DeadCode, "crate"))
    return sort_tasks(tasks)


def sort_tasks(tasks: list[TransformationTask]) -> list[TransformationTask]:
    # stable: keeps the within-kind order set by discovery
    return sorted(tasks, key=lambda t: KIND_ORDER[t.kind])


def struct_use_targets(crate_dir: Path, migrated: list[str]) -> list[str]:
    """Functions whose signature still mentions a just-migrated raw aggregate."""
    out = set()
    for text in _texts(Path(crate_dir)).values():
        masked = lexer.mask_rust(text)
        # free functions only; impl methods of the safe type are not users
        for h in lexer.scan_functions(text, masked, top_level_only=True):
            sig = masked[h.header_start : h.body_open]
            if any(re.search(rf"\b{re.escape(s)}\b", sig) for s in migrated):
                out.add(h.name)
    return sorted(out)


@dataclass
class Phase2Plan:
    tasks: list[TransformationTask] = field(default_factory=list)
    struct_use_discovered: bool = False

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"struct_use_discovered": self.struct_use_discovered, "tasks": [t.to_dict() for t in self.tasks]}
        path.write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path: Path) -> "Phase2Plan":
        try:
            d = json.loads(path.read_text())
            return cls([TransformationTask.from_dict(t) for t in d["tasks"]], d["struct_use_discovered"])
        except (KeyError, ValueError) as exc:
            raise StateCorrupt(f"unreadable task list {path}: {exc}") from exc


def run_phase2(
    ws: Workspace,
    crate_dir: Path,
    provider: Provider,
    suite: TestSuite,
    state: PipelineState,
    deferred_wrappers: list[str],
    *,
    max_iter: int = MAX_ITER,
    timeout: float = 30.0,
    provider_retries: int = PROVIDER_RETRIES,
    handler_names=None,
) -> Phase2Plan:
    phase_dir = ws.state_dir / "phase2"
    phase_dir.mkdir(parents=True, exist_ok=True)
    plan_path = phase_dir / "tasks.json"
    base_path = phase_dir / "baseline.json"
    if base_path.exists():
        baseline = Baseline.from_json(base_path.read_text())
    else:
        baseline = record_baseline(crate_dir, suite, timeout)
        base_path.write_text(baseline.to_json() + "\n")
    plan = Phase2Plan.load(plan_path) if plan_path.exists() else Phase2Plan(discover_tasks(crate_dir, state, deferred_wrappers))
    plan.save(plan_path)
    kwargs = {} if handler_names is None else {"handler_names": handler_names}
    tools = ToolSuite(ws, crate_dir, suite, timeout=timeout, **kwargs)
    i = 0
    while i < len(plan.tasks):
        task = plan.tasks[i]
        if not plan.struct_use_discovered and KIND_ORDER[task.kind] > KIND_ORDER[TaskKind.StructMigration]:
            migrated = [t.target for t in plan.tasks if t.kind is TaskKind.StructMigration and t.state is TaskState.Completed]
            extra = [TransformationTask.make(TaskKind.StructUseMigrate, n) for n in struct_use_targets(crate_dir, migrated)]
            plan.tasks[i:i] = extra
            plan.struct_use_discovered = True
            plan.save(plan_path)
            continue
        if task.state in (TaskState.Completed, TaskState.Failed) or task.id in state.completed_tasks:
            i += 1
            continue
        run_task(task, provider, tools, baseline, max_iter=max_iter, timeout=timeout, provider_retries=provider_retries)
        if task.state is TaskState.Completed:
            state.completed_tasks.add(task.id)
        ws.persist_state(state)
        plan.save(plan_path)
        i += 1
    return plan
