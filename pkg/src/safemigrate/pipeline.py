"""Stage drivers shared by the command-line interface.

Every stage reads and writes the persisted pipeline state, so any stage can
be interrupted and resumed.  Leftover in-flight snapshots from a killed run
are restored before work continues.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
from pathlib import Path

from . import agent, metrics, structs, tdwe, translate
from .buildtools import TestSuite, cargo_build, run_test_suite
from .config import PipelineConfig
from .errors import (
    BuildEnvironmentError,
    MigrateError,
    RegressionDetected,
    StageOrderError,
    StructGenerationFailed,
    UsageError,
)
from .provider import Provider, make_provider
from .source_model import (
    build_call_graph,
    decompose_c,
    decompose_subject,
    leaf_first_order,
    map_c_to_subject,
)
from .workspace import LAYOUT, PHASE_ORDER, Phase, PipelineState, Workspace, copy_crate

log = logging.getLogger(__name__)

RECOVERABLE_PREFIXES = ("inflight-", "tdwe-", "task-", "ckpt-")


class InitFailed(MigrateError):
    """The transpiled crate does not build or does not pass its own suite."""


# ---------------------------------------------------------------------------
# helpers


def open_workspace(root: Path) -> Workspace:
    ws = Workspace(root)
    if not ws.exists() or not ws.state_file.is_file():
        raise UsageError(f"{ws.root} is not an initialised workspace; run `init` first")
    return ws


def require_phase(state: PipelineState, allowed: tuple[Phase, ...], command: str) -> bool:
    """True when the command should run; False when it already ran (no-op)."""
    if state.phase in allowed:
        return True
    first = min(PHASE_ORDER.index(p) for p in allowed)
    if PHASE_ORDER.index(state.phase) > first:
        log.info("%s already completed (phase is %s); nothing to do", command, state.phase.value)
        return False
    raise StageOrderError(f"`{command}` needs phase {allowed[0].value}, workspace is at {state.phase.value}")


def recover_interrupted(ws: Workspace) -> list[str]:
    """Restore and drop snapshots left behind by a killed run."""
    restored = []
    if not ws.snapshot_dir.is_dir():
        return restored
    for path in sorted(ws.snapshot_dir.glob("*.json")):
        sid = path.stem
        if not sid.startswith(RECOVERABLE_PREFIXES):
            continue
        if not sid.startswith("ckpt-"):
            ws.restore(sid)
            restored.append(sid)
            log.info("restored interrupted snapshot %s", sid)
        ws.drop_snapshot(sid)
    return restored


def load_suite(ws: Workspace) -> TestSuite:
    return TestSuite.load(ws.test_suite)


def _phase1_dir(ws: Workspace) -> Path:
    d = ws.state_dir / "phase1"
    d.mkdir(parents=True, exist_ok=True)
    return d


def load_registry(ws: Workspace) -> dict[str, str]:
    p = _phase1_dir(ws) / "structs.json"
    return json.loads(p.read_text()) if p.is_file() else {}


def save_registry(ws: Workspace, registry: dict[str, str]) -> None:
    (_phase1_dir(ws) / "structs.json").write_text(json.dumps(registry, indent=1, sort_keys=True) + "\n")


def load_outcomes(ws: Workspace) -> list[dict]:
    p = _phase1_dir(ws) / "outcomes.json"
    return json.loads(p.read_text()) if p.is_file() else []


def save_outcomes(ws: Workspace, outcomes: list[dict]) -> None:
    (_phase1_dir(ws) / "outcomes.json").write_text(json.dumps(outcomes, indent=1) + "\n")


def program_name(crate_dir: Path) -> str:
    manifest = Path(crate_dir) / "Cargo.toml"
    if manifest.is_file():
        m = re.search(r'^\s*name\s*=\s*"([^"]+)"', manifest.read_text(), re.M)
        if m:
            return m.group(1)
    return Path(crate_dir).name


def translation_order(crate_dir: Path) -> list[str]:
    records, _ = decompose_subject(crate_dir)
    return leaf_first_order(build_call_graph(records)).sequence


# ---------------------------------------------------------------------------
# init


def init_workspace(root: Path, c_dir: Path, rust_dir: Path, tests_dir: Path, force: bool = False) -> Workspace:
    for label, d in (("C source", c_dir), ("transpiled crate", rust_dir), ("test suite", tests_dir)):
        if d is None or not Path(d).is_dir():
            raise UsageError(f"{label} directory not found: {d}")
    if not (Path(rust_dir) / "Cargo.toml").is_file():
        raise UsageError(f"{rust_dir} has no Cargo.toml")
    ws = Workspace(root)
    if ws.exists():
        if not force:
            raise UsageError(f"{ws.root} already holds a workspace; pass --force to overwrite it")
        for name in LAYOUT:
            if name == "state":
                # keep the lock file held by the caller
                for child in ws.state_dir.iterdir():
                    if child.name == "lock":
                        continue
                    if child.is_dir():
                        shutil.rmtree(child)
                    else:
                        child.unlink()
            else:
                shutil.rmtree(ws.root / name, ignore_errors=True)
    ws.create_layout()
    shutil.rmtree(ws.c_src)
    shutil.copytree(c_dir, ws.c_src)
    copy_crate(Path(rust_dir), ws.rust_base)
    shutil.copytree(tests_dir, ws.test_suite)
    suite = load_suite(ws)
    build = cargo_build(ws.rust_base)
    if not build.ok:
        raise InitFailed(f"the transpiled crate does not build:\n{build.diagnostics}")
    run = run_test_suite(ws.rust_base, suite)
    if not run.ok:
        raise InitFailed(f"the transpiled crate fails its own test suite:\n{run.feedback()}")
    copy_crate(ws.rust_base, ws.rust_test)
    copy_crate(ws.rust_base, ws.rust_safe)
    ws.persist_state(PipelineState())
    log.info("workspace initialised at %s (%d vectors, %d scripts)", ws.root, len(suite.vectors), len(suite.scripts))
    return ws


# ---------------------------------------------------------------------------
# phase 1


def _c_struct_texts(ws: Workspace) -> dict[str, str]:
    try:
        _, texts = decompose_c(ws.c_src)
    except FileNotFoundError:
        return {}
    out = {}
    for t in texts:
        for name in re.findall(r"\bstruct\s+([A-Za-z_]\w*)\s*\{", t) + re.findall(r"\}\s*([A-Za-z_]\w*)\s*;\s*$", t):
            out.setdefault(name, t)
    return out


def phase1_structs(ws: Workspace, state: PipelineState, provider: Provider, cfg: PipelineConfig) -> None:
    registry = load_registry(ws)
    _, aggregates = decompose_subject(ws.rust_test)
    c_structs = _c_struct_texts(ws)
    system = structs.DEFAULT_SYSTEM_NAMES | set(cfg.system_aggregate_names)
    c_names = set(c_structs) if c_structs else None
    taken = {a.name for a in aggregates}
    for agg in sorted(aggregates, key=lambda a: (a.file, a.name)):
        if agg.name in registry or agg.name in state.failed_structs or agg.name in registry.values():
            continue
        if structs.classify_aggregate(agg, system, aggregates, c_names) is not structs.AggregateClass.Translatable:
            continue
        try:
            a = structs.generate_abstraction(
                agg, c_structs.get(agg.name), provider, cfg.struct_retry_budget, taken
            )
        except StructGenerationFailed as exc:
            log.info("%s", exc)
            state.failed_structs.add(agg.name)
            ws.persist_state(state)
            continue
        snap = ws.snapshot_files([ws.rel(ws.rust_test / agg.file)], snap_id=f"inflight-struct-{agg.name}")
        try:
            result = structs.append_and_verify(a, agg, ws, state)
        except BaseException:
            ws.restore(snap)
            raise
        finally:
            ws.drop_snapshot(snap.id)
        if result.outcome is structs.StructOutcome.Accepted:
            registry[agg.name] = a.safe_name
            taken.add(a.safe_name)
            save_registry(ws, registry)
        ws.persist_state(state)
    save_registry(ws, registry)


def phase1_functions(ws: Workspace, state: PipelineState, provider: Provider, cfg: PipelineConfig) -> None:
    suite = load_suite(ws)
    order = translation_order(ws.rust_base)
    registry = load_registry(ws)
    try:
        c_records, _ = decompose_c(ws.c_src)
    except FileNotFoundError:
        c_records = []
    outcomes = load_outcomes(ws)
    for name in order:
        if name in state.completed_functions or name in state.failed_functions:
            continue
        records, _ = decompose_subject(ws.rust_test)
        by_name = {}
        for r in sorted(records, key=lambda r: r.file):
            by_name.setdefault(r.name, r)
        fr = by_name.get(name)
        if fr is None:
            continue
        if name + translate.SAFE_SUFFIX in by_name:
            # accepted by a run that was killed before the state was written
            state.completed_functions.add(name)
            ws.persist_state(state)
            continue
        pairs = map_c_to_subject(c_records, [fr])
        text = (ws.rust_test / fr.file).read_text()
        sigs = []
        for callee in fr.callees:
            if callee in state.completed_functions:
                sig = translate.safe_signature(
                    (ws.rust_test / by_name[callee].file).read_text() if callee in by_name else text,
                    callee + translate.SAFE_SUFFIX,
                )
                if sig:
                    sigs.append(sig)
        aggs = [d for d in (structs.find_safe_decl(ws.rust_test, s) for s in sorted(registry.values())) if d]
        outcome = translate.translate_function(
            ws, fr, provider, suite,
            c_hint=pairs[name].c_hint, safe_callee_sigs=sigs, safe_aggregates=aggs,
            budget=cfg.retry_budget, timeout=cfg.test_timeout_s,
        )
        if outcome.status is translate.OutcomeStatus.Accepted:
            state.completed_functions.add(name)
        else:
            state.failed_functions.add(name)
        outcomes.append({"name": name, "status": outcome.status.value, "attempts": outcome.attempts})
        save_outcomes(ws, outcomes)
        ws.persist_state(state)


def run_phase1(ws: Workspace, provider: Provider, cfg: PipelineConfig) -> None:
    state = ws.load_state()
    if not require_phase(state, (Phase.Phase1Struct, Phase.Phase1Function), "phase1"):
        return
    recover_interrupted(ws)
    if state.phase is Phase.Phase1Struct:
        phase1_structs(ws, state, provider, cfg)
        state.phase = Phase.Phase1Function
        ws.persist_state(state)
    phase1_functions(ws, state, provider, cfg)
    check_scaffold(ws.rust_test, load_suite(ws), cfg, "Phase 1")
    state.phase = Phase.TDWE
    ws.persist_state(state)


def check_scaffold(crate_dir: Path, suite: TestSuite, cfg: PipelineConfig, label: str) -> None:
    run = run_test_suite(crate_dir, suite, cfg.test_timeout_s)
    if not run.build.ok:
        raise RegressionDetected(f"{label} left a crate that does not build:\n{run.build.diagnostics}")
    if run.failing:
        raise RegressionDetected(f"{label} left failing vectors:\n{run.feedback()}")


# ---------------------------------------------------------------------------
# TDWE


def run_tdwe_stage(ws: Workspace, cfg: PipelineConfig) -> None:
    state = ws.load_state()
    if not require_phase(state, (Phase.TDWE,), "tdwe"):
        return
    marker = ws.state_dir / "tdwe.started"
    if not marker.exists():
        copy_crate(ws.rust_safe, ws.rust_safe_remap)
        marker.write_text("")
    recover_interrupted(ws)
    done = {r["name"]: r for r in tdwe.read_log(ws)["eliminations"] if r.get("status") != "DeferredDuplicateSecondary"}
    for r in tdwe.read_log(ws)["eliminations"]:
        if r.get("status") == "DeferredDuplicateSecondary":
            done.setdefault(f"{r['name']}@{','.join(r.get('files', []))}", r)
    registry = load_registry(ws)
    suite = load_suite(ws)
    tdwe.run_tdwe(
        ws, ws.rust_safe_remap, translation_order(ws.rust_base), set(state.completed_functions),
        suite, registry, cfg.test_timeout_s, done,
    )
    check_scaffold(ws.rust_safe_remap, suite, cfg, "TDWE")
    state.phase = Phase.Phase2
    ws.persist_state(state)


# ---------------------------------------------------------------------------
# phase 2


def deferred_wrappers(ws: Workspace) -> list[str]:
    return sorted(
        {r["name"] for r in tdwe.read_log(ws)["eliminations"] if r.get("status") == "DeferredUnsafeCast"}
    )


def run_phase2_stage(ws: Workspace, provider: Provider, cfg: PipelineConfig) -> agent.Phase2Plan | None:
    state = ws.load_state()
    if not require_phase(state, (Phase.Phase2,), "phase2"):
        return None
    recover_interrupted(ws)
    plan = agent.run_phase2(
        ws, ws.rust_safe_remap, provider, load_suite(ws), state, deferred_wrappers(ws),
        max_iter=cfg.max_iter, timeout=cfg.test_timeout_s, provider_retries=cfg.provider_retries,
        handler_names=tuple(cfg.handler_registration_names),
    )
    state.phase = Phase.Done
    ws.persist_state(state)
    return plan


# ---------------------------------------------------------------------------
# metrics


def final_crate(ws: Workspace) -> Path:
    for d in (ws.rust_safe_remap, ws.rust_safe):
        if (d / "Cargo.toml").is_file():
            return d
    return ws.rust_base


def build_report(ws: Workspace, cfg: PipelineConfig, lint: bool = True) -> metrics.QualityReport:
    state = ws.load_state()
    after_dir = final_crate(ws)
    suite = load_suite(ws)
    outcomes = load_outcomes(ws)
    accepted = {o["name"] for o in outcomes if o["status"] == translate.OutcomeStatus.Accepted.value}
    recovered = set()
    plan_path = ws.state_dir / "phase2" / "tasks.json"
    if plan_path.is_file():
        for t in agent.Phase2Plan.load(plan_path).tasks:
            if t.kind is agent.TaskKind.FunctionTranslate and t.state is agent.TaskState.Completed:
                recovered.add(t.target)
    comp = metrics.compliance_rate(accepted, len(outcomes), recovered) if outcomes else None
    run = run_test_suite(after_dir, suite, cfg.test_timeout_s)
    vec_ids = {v.id for v in suite.vectors}
    script_ids = {s.id for s in suite.scripts}

    def rate(ids: set[str]) -> float | None:
        if not ids or not run.build.ok:
            return None if not ids else 0.0
        return len(ids & run.passing) / len(ids)

    report = metrics.QualityReport(
        program=program_name(ws.rust_base),
        before=metrics.measure(ws.rust_base),
        after=metrics.measure(after_dir),
        compliance_rate=comp,
        vector_pass_rate=rate(vec_ids),
        script_pass_rate=rate(script_ids),
    )
    if lint:
        try:
            report.lint_before = metrics.lint_warning_count(ws.rust_base)
            report.lint_after = metrics.lint_warning_count(after_dir)
        except BuildEnvironmentError as exc:
            log.warning("lint counts unavailable: %s", exc)
    log.debug("report built at phase %s", state.phase.value)
    return report


def run_metrics(ws: Workspace, cfg: PipelineConfig, fmt: str = "text", lint: bool = True) -> str:
    report = build_report(ws, cfg, lint)
    text = metrics.emit_report([report], fmt)
    (ws.state_dir / f"report.{'csv' if fmt == 'csv' else 'txt'}").write_text(text)
    return text


# ---------------------------------------------------------------------------
# whole pipeline


def resolve_provider(cfg: PipelineConfig, provider: Provider | None) -> Provider:
    if provider is not None:
        return provider
    if not cfg.provider:
        raise UsageError("no provider configured; pass --provider scripted:<dir> or live[:model]")
    try:
        return make_provider(cfg.provider)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def run_all(ws: Workspace, provider: Provider | None, cfg: PipelineConfig, fmt: str = "text", lint: bool = True) -> str:
    run_phase1(ws, provider, cfg)
    run_tdwe_stage(ws, cfg)
    run_phase2_stage(ws, provider, cfg)
    return run_metrics(ws, cfg, fmt, lint)
