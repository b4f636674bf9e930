"""Per-function wrapper/safe-pair translation behind the compile-and-test gate."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field

from . import lexer
from .buildtools import TestSuite, cap_feedback, cargo_build, run_test_suite
from .errors import ProviderError
from .lexer import FnHeader
from .provider import Provider, render_template
from .source_model import CFunctionRecord, FunctionRecord
from .workspace import Workspace

log = logging.getLogger(__name__)

RETRY_BUDGET = 5
SAFE_SUFFIX = "_safe"
SHAPE_QUALIFIERS = ("unsafe", "pub", "extern-C", "no-mangle", "inline")

_BLOCK_HEAD = re.compile(r"^(?:if|match|while|for|loop|unsafe)\b|^\{")
_LET_RE = re.compile(r"^let\s+(mut\s+)?([A-Za-z_]\w*)\s*(?::(.*?))?=(?!=)(.*)$", re.S)


@dataclass
class Statement:
    text: str
    masked: str
    terminated: bool  # followed by ';'


def split_statements(text: str, masked: str, start: int, end: int) -> list[Statement]:
    """Top-level statements of a block body ``[start, end)``.

    Block-like expression statements (``if``/``match``/loops/bare blocks)
    end at their closing brace even without a semicolon.
    """
    out: list[Statement] = []
    depth = 0
    piece = start

    def push(a: int, b: int, term: bool) -> None:
        # trim by the masked view so leading comments drop out of both views
        while a < b and masked[a].isspace():
            a += 1
        while b > a and masked[b - 1].isspace():
            b -= 1
        if a < b:
            out.append(Statement(text[a:b], masked[a:b], term))

    k = start
    while k < end:
        ch = masked[k]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if ch == "}" and depth == 0 and _BLOCK_HEAD.match(masked[piece:k].lstrip()):
                nxt, _ = lexer.next_significant(masked, k + 1)
                if nxt not in ("else", ".", "?", ";", "as") and not (nxt and nxt in "+-*/%&|^<>=,)"):
                    push(piece, k + 1, False)
                    piece = k + 1
        elif ch == ";" and depth == 0:
            push(piece, k, True)
            piece = k + 1
        k += 1
    push(piece, end, False)
    return out


@dataclass
class WrapperPair:
    base_name: str
    safe_name: str
    wrapper_text: str
    safe_text: str
    conversions: list[tuple[str, str]] = field(default_factory=list)

    def text(self) -> str:
        return self.wrapper_text + "\n\n" + self.safe_text


class OutcomeStatus(enum.Enum):
    Accepted = "Accepted"
    Retained = "Retained"


@dataclass
class TranslationOutcome:
    name: str
    status: OutcomeStatus
    attempts: int
    last_failure: str | None = None


def parse_pair(response: str, base_name: str) -> WrapperPair:
    code = lexer.strip_code_fences(response)
    masked = lexer.mask_rust(code)
    headers = {h.name: h for h in lexer.scan_functions(code, masked)}
    safe_name = base_name + SAFE_SUFFIX
    missing = [n for n in (base_name, safe_name) if n not in headers]
    if missing:
        raise ValueError(f"response does not define: {', '.join(missing)}")
    w, s = headers[base_name], headers[safe_name]
    wrapper_text = code[w.start : w.end]
    conversions = []
    for st in wrapper_statements(wrapper_text):
        m = _LET_RE.match(st.masked) if st.terminated else None
        if m:
            conversions.append((m.group(2), st.text[m.start(4) : m.end(4)].strip()))
    return WrapperPair(base_name, safe_name, wrapper_text, code[s.start : s.end], conversions)


def wrapper_statements(wrapper_text: str) -> list[Statement]:
    masked = lexer.mask_rust(wrapper_text)
    hdrs = lexer.scan_functions(wrapper_text, masked)
    if not hdrs:
        return []
    h = hdrs[0]
    return split_statements(wrapper_text, masked, h.body_open + 1, h.end - 1)


def tail_call_args(stmt: Statement, safe_name: str) -> list[str] | None:
    """Argument texts if ``stmt`` is exactly one call to ``safe_name``."""
    m = re.match(rf"{re.escape(safe_name)}\s*\(", stmt.masked)
    if not m:
        return None
    open_idx = m.end() - 1
    close = lexer.match_forward(stmt.masked, open_idx)
    if close != len(stmt.masked) - 1:
        return None
    return [stmt.text[a:b].strip() for a, b in lexer.split_top_level(stmt.masked, open_idx + 1, close, exprs=True)]


def validate_wrapper_shape(p: WrapperPair, original: FnHeader | None = None) -> list[str]:
    """Shape violations of a pair; the empty list means well-formed."""
    problems = []
    if p.safe_name != p.base_name + SAFE_SUFFIX:
        problems.append(f"safe function must be named {p.base_name}{SAFE_SUFFIX}, got {p.safe_name}")
    hdrs = lexer.scan_functions(p.wrapper_text)
    if len(hdrs) != 1:
        return problems + ["wrapper text must hold exactly one function"]
    w = hdrs[0]
    if w.name != p.base_name:
        problems.append(f"wrapper must be named {p.base_name}, got {w.name}")
    if not lexer.find_function(p.safe_text, p.safe_name):
        problems.append(f"safe text does not define {p.safe_name}")
    if original is not None:
        got = [(q.name, lexer.normalize_ws(q.type)) for q in w.params]
        want = [(q.name, lexer.normalize_ws(q.type)) for q in original.params]
        if got != want:
            problems.append(f"wrapper parameters {got} differ from the original {want}")
        if lexer.normalize_ws(w.ret) != lexer.normalize_ws(original.ret):
            problems.append(f"wrapper return type `{w.ret}` differs from the original `{original.ret}`")
        for q in SHAPE_QUALIFIERS:
            if (q in original.qualifiers) != (q in w.qualifiers):
                verb = "drops" if q in original.qualifiers else "adds"
                problems.append(f"wrapper {verb} the `{q}` qualifier of the original")
    params = {q.name for q in w.params}
    stmts = wrapper_statements(p.wrapper_text)
    if not stmts:
        return problems + [f"wrapper body must end with a call to {p.safe_name}"]
    *lets, tail = stmts
    for st in lets:
        m = _LET_RE.match(st.masked) if st.terminated else None
        if not m:
            problems.append(f"non-let statement in wrapper body: `{lexer.normalize_ws(st.text)[:80]}`")
        elif m.group(2) not in params:
            problems.append(f"let binding `{m.group(2)}` does not re-bind a parameter")
    if tail_call_args(tail, p.safe_name) is None:
        problems.append(f"wrapper tail is not a single call to {p.safe_name}")
    return problems


def build_prompt(
    fr: FunctionRecord,
    c_hint: CFunctionRecord | None,
    safe_callee_sigs: list[str],
    safe_aggregates: list[str],
) -> str:
    c_block = f"```c\n{c_hint.body}\n```" if c_hint else "(absent: no matching C definition)"
    callees = "\n".join(f"- `{s}`" for s in safe_callee_sigs) or "(none)"
    aggs = "\n\n".join(f"```rust\n{a}\n```" for a in safe_aggregates) or "(none)"
    return render_template(
        "function_prompt.txt",
        name=fr.name,
        c_block=c_block,
        rust_block=fr.text,
        callee_block=callees,
        aggregate_block=aggs,
    )


def safe_signature(text: str, name: str) -> str | None:
    hdr = lexer.find_function(text, name)
    if hdr is None:
        return None
    return lexer.normalize_ws(text[hdr.header_start : hdr.body_open])


def inflight_id(name: str) -> str:
    return f"inflight-{name}"


def translate_function(
    ws: Workspace,
    fr: FunctionRecord,
    provider: Provider,
    suite: TestSuite,
    *,
    c_hint: CFunctionRecord | None = None,
    safe_callee_sigs: list[str] = (),
    safe_aggregates: list[str] = (),
    budget: int = RETRY_BUDGET,
    timeout: float = 30.0,
) -> TranslationOutcome:
    """Try up to ``budget`` candidate pairs for ``fr`` in rust_test.

    The target file is snapshotted (and the snapshot persisted, so a killed
    run can be rolled back on resume) before the first insertion and
    restored after every failed attempt.
    """
    prompt = build_prompt(fr, c_hint, list(safe_callee_sigs), list(safe_aggregates))
    path = ws.rust_test / fr.file
    snap = ws.snapshot_files([ws.rel(path)], snap_id=inflight_id(fr.name))
    last_failure = None
    try:
        for attempt in range(1, budget + 1):
            failure = _attempt(ws, fr, path, prompt, provider, suite, timeout)
            if failure is None:
                mirror = ws.rust_safe / fr.file
                mirror.parent.mkdir(parents=True, exist_ok=True)
                mirror.write_bytes(path.read_bytes())
                log.info("%s accepted on attempt %d", fr.name, attempt)
                return TranslationOutcome(fr.name, OutcomeStatus.Accepted, attempt)
            ws.restore(snap)
            last_failure = failure
            log.info("%s attempt %d failed", fr.name, attempt)
            prompt += (
                f"\n\n## Attempt {attempt} failed\n```\n{cap_feedback(failure)}\n```\n"
                "Emit a corrected pair.\n"
            )
        return TranslationOutcome(fr.name, OutcomeStatus.Retained, budget, last_failure)
    except BaseException:
        ws.restore(snap)
        raise
    finally:
        ws.drop_snapshot(snap.id)


def _attempt(
    ws: Workspace,
    fr: FunctionRecord,
    path,
    prompt: str,
    provider: Provider,
    suite: TestSuite,
    timeout: float,
) -> str | None:
    """One candidate; returns failure feedback or None on acceptance."""
    try:
        response = provider.complete(prompt)
    except ProviderError as exc:
        return f"provider error: {exc}"
    try:
        pair = parse_pair(response, fr.name)
    except ValueError as exc:
        return f"malformed response: {exc}"
    text = path.read_text()
    original = lexer.find_function(text, fr.name)
    if original is None:
        return f"function {fr.name} not found in {fr.file}"
    problems = validate_wrapper_shape(pair, original)
    if problems:
        return "wrapper shape violations:\n" + "\n".join(f"- {p}" for p in problems)
    path.write_text(text[: original.start] + pair.text() + text[original.end :])
    build = cargo_build(ws.rust_test)
    if not build.ok:
        return "compile errors:\n" + build.diagnostics
    run = run_test_suite(ws.rust_test, suite, timeout)
    if not run.ok:
        return "test failures:\n" + run.feedback()
    return None
