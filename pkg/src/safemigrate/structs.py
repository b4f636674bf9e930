"""Aggregate classification and the safe dual-aggregate abstraction.

A translatable raw aggregate ``S`` keeps its definition; a safe counterpart
``Ŝ`` is appended next to it together with a copying ``From<&S>``
materialisation and a borrowing ``to_raw`` projection.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import lexer
from .buildtools import cap_feedback, cargo_build
from .errors import StructGenerationFailed
from .provider import Provider, render_template, load_template
from .source_model import RAW_TOKEN_RE, RawAggregateRecord, aggregates_from_text
from .workspace import PipelineState, Workspace

log = logging.getLogger(__name__)

FIXME_MARKER = "// FIXME: inferred length"
STRUCT_RETRY_BUDGET = 3

DEFAULT_SYSTEM_NAMES = frozenset(
    {
        "FILE", "_IO_FILE", "_IO_marker", "_IO_codecvt", "_IO_wide_data",
        "stat", "stat64", "passwd", "group", "dirent", "dirent64", "DIR",
        "tm", "timespec", "timeval", "timezone", "sigaction", "sigset_t",
        "__sigset_t", "termios", "winsize", "utsname", "rlimit", "option",
        "lconv", "pollfd", "sockaddr", "addrinfo", "__va_list_tag",
    }
)
SYNTHETIC_PREFIXES = ("C2RustUnnamed",)
SYSTEM_PATH_MARKERS = ("/usr/include/", "/usr/lib/")

_INT_TYPES = re.compile(
    r"^(?:(?:libc::|core::ffi::|std::os::raw::)?c_(?:u?(?:char|short|int|long|longlong))|size_t|ssize_t"
    r"|[iu](?:8|16|32|64|128|size)|usize|isize)$"
)
_CHAR_PTR = re.compile(r"^\*\s*(?:const|mut)\s+(?:libc::|core::ffi::|std::os::raw::)?c_char$")
_LEN_SUFFIXES = ("_len", "_length", "_size", "_count", "len", "size")


class AggregateClass(enum.Enum):
    System = "System"
    PointerFree = "PointerFree"
    Translatable = "Translatable"


class ConversionKind(enum.Enum):
    StringCopy = "string-copy"
    BufferCopy = "buffer-copy"
    ScalarBoxCopy = "scalar-box-copy"
    Passthrough = "passthrough"


class ViolationKind(enum.Enum):
    ClaimsOwnershipOfString = "ClaimsOwnershipOfString"
    ClaimsOwnershipOfBuffer = "ClaimsOwnershipOfBuffer"
    LeaksInProjection = "LeaksInProjection"


@dataclass
class OwnershipViolation:
    kind: ViolationKind
    location: tuple[str, int]
    offending_token: str


@dataclass
class SafeAbstraction:
    raw_name: str
    safe_name: str
    safe_decl: str
    materialisation: str
    projection: str
    field_map: list[tuple[str, str, ConversionKind]] = field(default_factory=list)

    def text(self) -> str:
        return "\n\n".join((self.safe_decl, self.materialisation, self.projection))


class StructOutcome(enum.Enum):
    Accepted = "Accepted"
    RolledBack = "RolledBack"


# ---------------------------------------------------------------------------
# classification


def _referenced_names(type_text: str) -> set[str]:
    return set(re.findall(r"[A-Za-z_]\w*", type_text))


def is_system_aggregate(
    r: RawAggregateRecord,
    system_names: frozenset[str] | set[str] = DEFAULT_SYSTEM_NAMES,
    synthetic_prefixes: tuple[str, ...] = SYNTHETIC_PREFIXES,
) -> bool:
    if r.name in system_names:
        return True
    if any(r.name.startswith(p) for p in synthetic_prefixes):
        return True
    return any(m in r.file for m in SYSTEM_PATH_MARKERS)


def has_raw_address_transitively(
    r: RawAggregateRecord, by_name: dict[str, RawAggregateRecord], _seen: set[str] | None = None
) -> bool:
    seen = _seen if _seen is not None else set()
    if r.name in seen:
        return False
    seen.add(r.name)
    if r.has_raw_address_field:
        return True
    for _, typ in r.fields_raw:
        for ref in _referenced_names(typ):
            other = by_name.get(ref)
            if other is not None and has_raw_address_transitively(other, by_name, seen):
                return True
    return False


def classify_aggregate(
    r: RawAggregateRecord,
    system_names: frozenset[str] | set[str] = DEFAULT_SYSTEM_NAMES,
    all_aggregates: list[RawAggregateRecord] | None = None,
    c_names: set[str] | None = None,
    synthetic_prefixes: tuple[str, ...] = SYNTHETIC_PREFIXES,
) -> AggregateClass:
    """System, else PointerFree (transitively), else Translatable.

    With ``c_names`` given, aggregates that do not come from the C tree are
    treated like system ones and retained unchanged.
    """
    if is_system_aggregate(r, system_names, synthetic_prefixes):
        return AggregateClass.System
    by_name = {a.name: a for a in (all_aggregates or [])}
    by_name.setdefault(r.name, r)
    if not has_raw_address_transitively(r, by_name):
        return AggregateClass.PointerFree
    if c_names is not None and r.name not in c_names:
        return AggregateClass.System
    return AggregateClass.Translatable


def safe_name_for(raw_name: str, taken: set[str] = frozenset()) -> str:
    camel = "".join(part[:1].upper() + part[1:] for part in raw_name.split("_") if part)
    if not camel or camel == raw_name or camel in taken:
        camel = (camel or "Aggregate") + "Safe"
    return camel


# ---------------------------------------------------------------------------
# buffer pairing


def length_partner(field_name: str, fields: list[tuple[str, str]]) -> str | None:
    """Name of the integer field that carries the element count of ``field_name``."""
    ints = {n for n, t in fields if _INT_TYPES.match(lexer.normalize_ws(t))}
    stem = field_name.rstrip("_")
    candidates = [stem + s for s in _LEN_SUFFIXES] + [f"n_{stem}", f"num_{stem}", f"{stem}_n"]
    for c in candidates:
        if c in ints:
            return c
    return None


def unpaired_buffer_fields(r: RawAggregateRecord) -> list[str]:
    """Raw non-string pointer fields that have no length partner."""
    out = []
    for name, typ in r.fields_raw:
        t = lexer.normalize_ws(typ)
        if not RAW_TOKEN_RE.search(t) or _CHAR_PTR.match(t):
            continue
        if length_partner(name, r.fields_raw) is None:
            out.append(name)
    return out


# ---------------------------------------------------------------------------
# response parsing


def _impl_block(code: str, masked: str, pattern: str) -> tuple[int, int] | None:
    m = re.search(pattern, masked)
    if not m:
        return None
    open_idx = masked.index("{", m.end() - 1)
    close = lexer.match_forward(masked, open_idx)
    if close < 0:
        return None
    ls = lexer.line_start(masked, m.start())
    start, _ = lexer.leading_attributes(code, masked, ls)
    return start, close + 1


def _conversion_kind(safe_type: str) -> ConversionKind:
    t = lexer.normalize_ws(safe_type)
    if "CString" in t or "CStr" in t or re.search(r"\bString\b", t):
        return ConversionKind.StringCopy
    if re.search(r"\bVec\s*<", t) or re.search(r"\bBox\s*<\s*\[", t):
        return ConversionKind.BufferCopy
    if re.search(r"\bBox\s*<", t):
        return ConversionKind.ScalarBoxCopy
    return ConversionKind.Passthrough


def parse_abstraction(response: str, raw: RawAggregateRecord, safe_name: str) -> SafeAbstraction:
    """Pull the three required items out of a provider response.

    Raises ValueError naming what is missing or malformed.
    """
    code = lexer.strip_code_fences(response)
    masked = lexer.mask_rust(code)
    decls = [a for a in aggregates_from_text(code, "<response>") if a.name == safe_name]
    if not decls:
        raise ValueError(f"response does not declare `struct {safe_name}`")
    decl = decls[0]
    raw_q = re.escape(raw.name)
    safe_q = re.escape(safe_name)
    mat = _impl_block(
        code, masked, rf"\bimpl\s*(?:<[^>{{]*>)?\s*(?:\w+::)*From\s*<\s*&\s*(?:'\w+\s+)?{raw_q}\s*>\s*for\s+{safe_q}\s*\{{"
    )
    if mat is None:
        raise ValueError(f"response lacks `impl From<&{raw.name}> for {safe_name}`")
    proj = None
    for m in re.finditer(rf"\bimpl\s+{safe_q}\s*\{{", masked):
        open_idx = m.end() - 1
        close = lexer.match_forward(masked, open_idx)
        if close > 0 and re.search(r"\bfn\s+to_raw\b", masked[open_idx:close]):
            ls = lexer.line_start(masked, m.start())
            start, _ = lexer.leading_attributes(code, masked, ls)
            proj = (start, close + 1)
            break
    if proj is None:
        raise ValueError(f"response lacks a projection `impl {safe_name} {{ fn to_raw(&self) -> {raw.name} }}`")

    safe_fields = decl.fields_raw
    by_name = dict(safe_fields)
    field_map = []
    for idx, (rname, _rtype) in enumerate(raw.fields_raw):
        if rname in by_name:
            sname, stype = rname, by_name[rname]
        elif len(safe_fields) == len(raw.fields_raw):
            sname, stype = safe_fields[idx]
        else:
            raise ValueError(f"safe struct has no counterpart for raw field `{rname}`")
        field_map.append((rname, sname, _conversion_kind(stype)))

    abstraction = SafeAbstraction(
        raw_name=raw.name,
        safe_name=safe_name,
        safe_decl=decl.text,
        materialisation=code[mat[0] : mat[1]],
        projection=code[proj[0] : proj[1]],
        field_map=field_map,
    )
    missing = missing_fixme_markers(abstraction, raw)
    if missing:
        raise ValueError(
            "buffer fields without a length partner need the marker "
            f"`{FIXME_MARKER}`: {', '.join(missing)}"
        )
    return abstraction


def missing_fixme_markers(a: SafeAbstraction, raw: RawAggregateRecord) -> list[str]:
    unpaired = set(unpaired_buffer_fields(raw))
    lines = a.safe_decl.splitlines()
    missing = []
    for rname, sname, kind in a.field_map:
        if rname not in unpaired or kind is not ConversionKind.BufferCopy:
            continue
        pat = re.compile(rf"^\s*(?:pub(?:\([^)]*\))?\s+)?{re.escape(sname)}\s*:")
        marked = False
        for k, ln in enumerate(lines):
            if pat.match(ln):
                marked = FIXME_MARKER in ln or (k > 0 and FIXME_MARKER in lines[k - 1])
                break
        if not marked:
            missing.append(sname)
    return missing


# ---------------------------------------------------------------------------
# ownership lint

_OWNERSHIP_PATTERNS = [
    (ViolationKind.ClaimsOwnershipOfString, re.compile(r"\bCString\s*::\s*from_raw\b"), "both"),
    (ViolationKind.ClaimsOwnershipOfBuffer, re.compile(r"\bVec\s*::\s*from_raw_parts\b"), "both"),
    (ViolationKind.ClaimsOwnershipOfBuffer, re.compile(r"\bBox\s*::\s*from_raw\b"), "both"),
    (ViolationKind.ClaimsOwnershipOfBuffer, re.compile(r"\bString\s*::\s*from_raw_parts\b"), "both"),
    (ViolationKind.LeaksInProjection, re.compile(r"\b(?:Box|CString|Vec|String)\s*::\s*(?:into_raw|leak)\b"), "projection"),
    (ViolationKind.LeaksInProjection, re.compile(r"\.\s*(?:into_raw|leak)\s*\("), "projection"),
    (ViolationKind.LeaksInProjection, re.compile(r"\bmem\s*::\s*forget\b"), "projection"),
]


def lint_ownership(a: SafeAbstraction, file: str = "<abstraction>") -> list[OwnershipViolation]:
    out = []
    full = a.text()
    offsets = {
        "materialisation": full.index(a.materialisation, len(a.safe_decl)),
        "projection": full.rindex(a.projection),
    }
    for part in ("materialisation", "projection"):
        text = getattr(a, part)
        masked = lexer.mask_rust(text)
        for kind, pat, scope in _OWNERSHIP_PATTERNS:
            if scope == "projection" and part != "projection":
                continue
            for m in pat.finditer(masked):
                line = lexer.line_of(full, offsets[part] + m.start())
                out.append(OwnershipViolation(kind, (file, line), text[m.start() : m.end()]))
    out.sort(key=lambda v: v.location[1])
    return out


# ---------------------------------------------------------------------------
# generation and insertion


def build_struct_prompt(raw: RawAggregateRecord, safe_name: str, c_hint: str | None) -> str:
    return render_template(
        "struct_prompt.txt",
        raw_name=raw.name,
        safe_name=safe_name,
        raw_struct=raw.text,
        c_hint=f"```c\n{c_hint}\n```" if c_hint else "(absent: no matching C definition found)",
        ownership_rules=load_template("copy_never_own.txt").rstrip(),
    )


def generate_abstraction(
    raw: RawAggregateRecord,
    c_hint: str | None,
    provider: Provider,
    budget: int = STRUCT_RETRY_BUDGET,
    taken_names: set[str] = frozenset(),
) -> SafeAbstraction:
    safe_name = safe_name_for(raw.name, taken_names)
    base = build_struct_prompt(raw, safe_name, c_hint)
    feedback = ""
    for attempt in range(1, budget + 1):
        response = provider.complete(base + feedback)
        try:
            a = parse_abstraction(response, raw, safe_name)
        except ValueError as exc:
            problem = str(exc)
        else:
            violations = lint_ownership(a)
            if not violations:
                return a
            problem = "ownership rules violated: " + "; ".join(
                f"{v.kind.value} at line {v.location[1]} (`{v.offending_token}`)" for v in violations
            )
        log.info("struct %s attempt %d rejected: %s", raw.name, attempt, problem)
        feedback += f"\n\n## Attempt {attempt} was rejected\n{cap_feedback(problem)}\nEmit the corrected code.\n"
    raise StructGenerationFailed(f"no acceptable abstraction for {raw.name} after {budget} attempts")


@dataclass
class AppendResult:
    outcome: StructOutcome
    diagnostics: str = ""


def append_and_verify(
    a: SafeAbstraction, raw: RawAggregateRecord, ws: Workspace, state: PipelineState
) -> AppendResult:
    """Append the abstraction to the raw aggregate's file in rust_test and build.

    The lint gate runs first; a rejected abstraction never touches the file.
    """
    violations = lint_ownership(a)
    if violations:
        state.failed_structs.add(raw.name)
        return AppendResult(StructOutcome.RolledBack, f"{len(violations)} ownership violation(s)")
    path = ws.rust_test / raw.file
    original_len = path.stat().st_size
    with open(path, "a") as fh:
        fh.write("\n" + a.text() + "\n")
    build = cargo_build(ws.rust_test)
    if not build.ok:
        ws.truncate_to_length(path, original_len)
        state.failed_structs.add(raw.name)
        log.info("struct %s rolled back: build failed", raw.name)
        return AppendResult(StructOutcome.RolledBack, build.diagnostics)
    mirror = ws.rust_safe / raw.file
    mirror.parent.mkdir(parents=True, exist_ok=True)
    mirror.write_bytes(path.read_bytes())
    return AppendResult(StructOutcome.Accepted)


def find_safe_decl(crate_dir: Path, safe_name: str) -> str | None:
    for p in sorted(Path(crate_dir).rglob("*.rs")):
        if "target" in p.relative_to(crate_dir).parts:
            continue
        for agg in aggregates_from_text(p.read_text(), p.name):
            if agg.name == safe_name:
                return agg.text
    return None
