"""Lexical safety counters, compliance rate, lint counts and report rendering.

All counters run on the masked view of each file, so comments, string
literals and char literals never contribute.

- ``raw_decls``: ``*const`` / ``*mut`` tokens (types in signatures, lets,
  fields and cast targets alike).
- ``raw_derefs``: prefix ``*`` in expression position.
- ``unsafe_loc``: lines holding code inside an explicit ``unsafe { }``
  extent, opener and closer lines included; bodies of ``unsafe fn`` are not
  counted unless they contain such a block.
- ``unsafe_casts``: ``transmute`` calls plus ``as`` casts whose target is a
  raw pointer type or whose operand is such a cast.
- ``unsafe_calls``: call and method-call expressions inside unsafe extents
  (macros excluded).
"""

from __future__ import annotations

import csv
import io
import logging
import re
import subprocess
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import lexer
from .errors import BuildEnvironmentError, UndefinedRate
from .source_model import source_files

log = logging.getLogger(__name__)

COUNTERS = ("raw_decls", "raw_derefs", "unsafe_loc", "unsafe_casts", "unsafe_calls")
CSV_COLUMNS = (
    "program", "system", "ptr_decl", "ptr_deref", "unsafe_loc", "unsafe_cast", "unsafe_call",
    "comp_rate", "correctness", "clippy",
)
REPORT_NOTES = (
    "unsafe_cast counts transmute calls and `as` casts to or from raw pointer types.",
    "unsafe_loc counts lines inside explicit unsafe blocks only; unsafe fn bodies are not counted.",
)


@dataclass
class SafetyMetrics:
    raw_decls: int = 0
    raw_derefs: int = 0
    unsafe_loc: int = 0
    unsafe_casts: int = 0
    unsafe_calls: int = 0

    def __add__(self, other: "SafetyMetrics") -> "SafetyMetrics":
        return SafetyMetrics(*(getattr(self, f) + getattr(other, f) for f in COUNTERS))

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


_RAW_DECL = re.compile(r"\*\s*(?:const|mut)\b")
_DEREF_PREV_KEYWORDS = {"return", "in", "match", "if", "while", "mut", "break", "else", "let", "move"}
_CALL = re.compile(r"(?<![\w$])((?:[A-Za-z_]\w*\s*::\s*)*[A-Za-z_]\w*)\s*(?:::\s*<[^;{}()]*?>\s*)?\(")
_NOT_CALLS = {"if", "while", "match", "for", "return", "fn", "loop", "in", "as", "let", "else", "unsafe", "move"}


def unsafe_extents(masked: str) -> list[tuple[int, int]]:
    """(keyword start, closing brace) of every ``unsafe {`` block."""
    out = []
    for m in re.finditer(r"\bunsafe\s*\{", masked):
        close = lexer.match_forward(masked, m.end() - 1)
        if close >= 0:
            out.append((m.start(), close))
    return out


def count_raw_decls(masked: str) -> int:
    return len(_RAW_DECL.findall(masked))


def count_raw_derefs(masked: str) -> int:
    n = 0
    for k, ch in enumerate(masked):
        if ch != "*":
            continue
        nxt = masked[k + 1 : k + 2]
        if nxt == "=":
            continue
        rest = masked[k + 1 :].lstrip()
        if not rest or re.match(r"(?:const|mut)\b", rest):
            continue
        if not (rest[0].isalnum() or rest[0] in "_(*&[\"'"):
            continue
        prev, _ = lexer.prev_significant(masked, k)
        if prev in _DEREF_PREV_KEYWORDS or not re.fullmatch(r"[\w\"']+|\)|\]|\?", prev or "x"):
            n += 1
    return n


def _cast_sites(masked: str) -> list[tuple[int, int, bool]]:
    """(as-keyword start, end of target type, target is raw) for each cast."""
    out = []
    for m in re.finditer(r"\bas\b", masked):
        prev, _ = lexer.prev_significant(masked, m.start())
        if prev in ("use", "::", "{", ",", ""):
            continue  # `use x as y` renames
        if re.match(r"\s*[A-Za-z_]\w*\s*[;,}]", masked[m.end() :]) and re.search(r"\buse\b[^;]*$", masked[: m.start()]):
            continue
        t = re.match(r"\s*(\*\s*(?:const|mut)\s+)*(?:[A-Za-z_][\w:]*|\(\))(?:\s*<[^;{}()]*?>)?", masked[m.end() :])
        if not t:
            continue
        raw = bool(_RAW_DECL.match(masked[m.end() :].lstrip()))
        out.append((m.start(), m.end() + t.end(), raw))
    return out


def count_unsafe_casts(masked: str) -> int:
    n = len(re.findall(r"\btransmute\s*(?:::\s*<[^;{}()]*?>\s*)?\(", masked))
    casts = _cast_sites(masked)
    ends = {end: raw for _, end, raw in casts}
    for start, _end, raw in casts:
        stripped = masked[:start].rstrip()
        operand_raw = ends.get(len(stripped), False)
        if raw or operand_raw:
            n += 1
    return n


def count_unsafe_calls(masked: str, extents: list[tuple[int, int]]) -> int:
    seen = set()
    for a, b in extents:
        for m in _CALL.finditer(masked, a, b):
            head = re.sub(r"\s+", "", m.group(1)).split("::")[-1]
            if head in _NOT_CALLS or m.start() in seen:
                continue
            prev, _ = lexer.prev_significant(masked, m.start())
            if prev == "fn":
                continue
            seen.add(m.start())
    return len(seen)


def count_unsafe_loc(text: str, masked: str, extents: list[tuple[int, int]]) -> int:
    lines = set()
    for a, b in extents:
        for k in range(a, b + 1):
            if not masked[k].isspace():
                lines.add(lexer.line_of(text, k))
    return len(lines)


def measure_text(text: str) -> SafetyMetrics:
    masked = lexer.mask_rust(text)
    extents = unsafe_extents(masked)
    return SafetyMetrics(
        raw_decls=count_raw_decls(masked),
        raw_derefs=count_raw_derefs(masked),
        unsafe_loc=count_unsafe_loc(text, masked, extents),
        unsafe_casts=count_unsafe_casts(masked),
        unsafe_calls=count_unsafe_calls(masked, extents),
    )


def measure(crate_dir: Path) -> SafetyMetrics:
    total = SafetyMetrics()
    for p in source_files(Path(crate_dir), (".rs",)):
        total = total + measure_text(p.read_text())
    return total


def compliance_rate(accepted: set[str] | list[str], total_functions: int, recovered: set[str] | list[str] = ()) -> float:
    """Share of functions accepted in Phase 1 or recovered in Phase 2."""
    if total_functions <= 0:
        raise UndefinedRate("no functions were attempted")
    good = set(accepted) | set(recovered)
    if len(good) > total_functions:
        raise ValueError("more successes than attempted functions")
    return len(good) / total_functions


def lint_warning_count(crate_dir: Path, timeout: float = 900) -> int:
    """Lines starting with ``warning`` in the linter's combined output."""
    try:
        proc = subprocess.run(
            ["cargo", "clippy", "--quiet", "--color", "never"],
            cwd=crate_dir, capture_output=True, text=True, timeout=timeout,
        )
    except FileNotFoundError as exc:
        raise BuildEnvironmentError("cargo not found on PATH; install a Rust toolchain") from exc
    output = proc.stdout + proc.stderr
    if "no such command" in output and "clippy" in output:
        raise BuildEnvironmentError("cargo clippy is not installed; run `rustup component add clippy`")
    if proc.returncode != 0 and "could not compile" in output and not re.search(r"^warning", output, re.M):
        raise BuildEnvironmentError(f"clippy failed:\n{output[-2000:]}")
    return sum(1 for line in output.splitlines() if re.match(r"^warning", line))


@dataclass
class QualityReport:
    program: str
    before: SafetyMetrics
    after: SafetyMetrics
    compliance_rate: float | None = None
    vector_pass_rate: float | None = None
    script_pass_rate: float | None = None
    lint_before: int | None = None
    lint_after: int | None = None

    def reductions(self) -> dict[str, float | None]:
        out = {}
        for f in COUNTERS:
            b, a = getattr(self.before, f), getattr(self.after, f)
            out[f] = None if b == 0 else (b - a) / b
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def report_rows(reports: list[QualityReport]) -> list[dict[str, str]]:
    rows = []
    for r in reports:
        for system, m, lint, comp, corr in (
            ("transpiled", r.before, r.lint_before, None, None),
            ("migrated", r.after, r.lint_after, r.compliance_rate, r.vector_pass_rate),
        ):
            row = {"program": r.program, "system": system}
            for col, f in zip(CSV_COLUMNS[2:7], COUNTERS):
                row[col] = _fmt(getattr(m, f))
            row.update(comp_rate=_fmt(comp), correctness=_fmt(corr), clippy=_fmt(lint))
            rows.append(row)
        red = {"program": r.program, "system": "reduction"}
        for col, f in zip(CSV_COLUMNS[2:7], COUNTERS):
            v = r.reductions()[f]
            red[col] = "" if v is None else f"{v * 100:.1f}%"
        red.update(comp_rate="", correctness="", clippy="")
        rows.append(red)
    return rows


def emit_report(reports: list[QualityReport], fmt: str = "text") -> str:
    rows = report_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) if rows else len(c) for c in CSV_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in CSV_COLUMNS)]
    lines.append("  ".join("-" * widths[c] for c in CSV_COLUMNS))
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in CSV_COLUMNS).rstrip())
    for r in reports:
        if r.script_pass_rate is not None:
            lines.append(f"{r.program}: script pass rate {r.script_pass_rate:.4f}")
    lines.append("")
    lines.extend(f"note: {n}" for n in REPORT_NOTES)
    return "\n".join(lines) + "\n"


def metric_fields() -> list[str]:
    return [f.name for f in fields(SafetyMetrics)]
