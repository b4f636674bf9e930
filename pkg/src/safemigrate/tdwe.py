"""Type-directed wrapper elimination.

Each wrapper/safe pair is removed by rewriting every call ``f(a1, .., an)``
to call the safe function with converted arguments, deleting the wrapper,
and promoting ``f_safe`` to the name ``f``.  Conversions come from the
wrapper's own let-bindings; a six-layer fallback covers ambiguous wrappers
and call-site-specific mismatches.  Every elimination is gated on build and
test, with rollback of all affected files on failure.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from . import lexer
from .buildtools import TestSuite, cargo_build, run_test_suite
from .errors import ExtractionAmbiguous
from .lexer import FnHeader, Param
from .source_model import source_files
from .translate import SAFE_SUFFIX, WrapperPair, _LET_RE, tail_call_args, wrapper_statements
from .workspace import Workspace

log = logging.getLogger(__name__)

DIRECT = "direct-extraction"
Layer = Union[int, str]

_ARG = "__tdwe_arg_{}__"
_ARG_RE = re.compile(r"__tdwe_arg_([A-Za-z_]\w*?)__")
_FFI_PREFIX = re.compile(r"^(?:::)?(?:libc|core::ffi|std::ffi|std::os::raw)::")
_NUMERIC = re.compile(
    r"^(?:(?:libc::|core::ffi::|std::os::raw::)?c_(?:u?(?:char|schar|uchar|short|ushort|int|uint|long|ulong|longlong|ulonglong)|float|double)"
    r"|(?:libc::)?(?:size_t|ssize_t|off_t|intmax_t|uintmax_t)|[iu](?:8|16|32|64|128|size)|f32|f64)$"
)
_INTEGER = re.compile(
    r"^(?:(?:libc::|core::ffi::|std::os::raw::)?c_(?:u?(?:char|schar|uchar|short|ushort|int|uint|long|ulong|longlong|ulonglong))"
    r"|(?:libc::)?(?:size_t|ssize_t|off_t)|[iu](?:8|16|32|64|128|size))$"
)
_PTR = re.compile(r"^\*\s*(const|mut)\s+(.+)$")
_NULL = re.compile(
    r"^(?:(?:::)?(?:std|core)::)?(?:ptr::)?null(?:_mut)?\s*(?:::\s*<[^()]*>\s*)?\(\s*\)$"
    r"|^0(?:\s*as\s+[\w:]+)?\s+as\s+\*\s*(?:const|mut)\b.*$"
)
_UNSAFE_HINTS = re.compile(
    r"\bfrom_ptr\b|\bfrom_raw_parts(?:_mut)?\b|\bas_ref\s*\(|\bas_mut\s*\(|\.offset\s*\(|\.add\s*\(|\btransmute\b"
    r"|\.read\s*\(|\.write\s*\("
)


class EliminationStatus(enum.Enum):
    Committed = "Committed"
    RolledBack = "RolledBack"
    DeferredUnsafeCast = "DeferredUnsafeCast"
    DeferredDuplicateSecondary = "DeferredDuplicateSecondary"


@dataclass
class ConversionRule:
    """Conversion for one argument slot of the safe function.

    ``expr`` uses internal placeholders; :attr:`template` renders them as
    ``{arg}`` for the rule's own parameter and ``{arg:NAME}`` for others.
    """

    param: str
    expr: str
    needs_unsafe_block: bool = False

    @property
    def template(self) -> str:
        def sub(m: re.Match) -> str:
            return "{arg}" if m.group(1) == self.param else "{arg:%s}" % m.group(1)

        return _ARG_RE.sub(sub, self.expr)

    @property
    def params(self) -> list[str]:
        seen = []
        for m in _ARG_RE.finditer(self.expr):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return seen

    @property
    def is_identity(self) -> bool:
        return self.expr == _ARG.format(self.param)

    def instantiate(self, args: dict[str, str]) -> str:
        return fill_placeholders(self.expr, args)


@dataclass
class EliminationOutcome:
    name: str
    status: EliminationStatus
    layer_used_per_arg: list[Layer] = field(default_factory=list)
    unsafe_cast_sites: list[tuple[str, int]] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status.value,
            "layers": self.layer_used_per_arg,
            "unsafe_cast_sites": [list(s) for s in self.unsafe_cast_sites],
            "files": self.files,
            "detail": self.detail[:2000],
        }


# ---------------------------------------------------------------------------
# expression helpers


# C type aliases as defined for x86_64 Linux
_C_ALIASES = {
    "c_char": "i8", "c_schar": "i8", "c_uchar": "u8", "c_short": "i16", "c_ushort": "u16",
    "c_int": "i32", "c_uint": "u32", "c_long": "i64", "c_ulong": "u64", "c_longlong": "i64",
    "c_ulonglong": "u64", "c_float": "f32", "c_double": "f64", "size_t": "usize", "ssize_t": "isize",
}
_ALIAS_RE = re.compile(r"(?:(?:::)?(?:libc|core::ffi|std::ffi|std::os::raw)::)?\b(" + "|".join(_C_ALIASES) + r")\b")


def _strip_ffi(t: str) -> str:
    return _FFI_PREFIX.sub("", lexer.normalize_ws(t))


def same_type(a: str, b: str) -> bool:
    def canon(t: str) -> str:
        return _ALIAS_RE.sub(lambda m: _C_ALIASES[m.group(1)], lexer.normalize_ws(t)).replace(" ", "")

    return canon(a) == canon(b)


def is_atomic(expr: str) -> bool:
    """Path or postfix chain (calls, indexing, fields, ``?``) that binds tighter than any operator."""
    masked = lexer.mask_rust(expr).strip()
    if not masked:
        return False
    if masked[0] in "([" and lexer.match_forward(masked, 0) == len(masked) - 1:
        return True
    k = 0
    n = len(masked)
    m = re.match(r"(?:::)?[A-Za-z_]\w*(?:\s*::\s*[A-Za-z_]\w*)*|\d[\w.]*|b?'[^']*'|b?\"\s*\"", masked)
    if not m:
        # literal strings are masked to quotes plus blanks
        m = re.match(r'b?r?#*"[^"]*"#*', masked)
        if not m:
            return False
    k = m.end()
    while k < n:
        ch = masked[k]
        if ch in "([":
            close = lexer.match_forward(masked, k)
            if close < 0:
                return False
            k = close + 1
        elif ch == "." and k + 1 < n and (masked[k + 1].isalpha() or masked[k + 1] == "_" or masked[k + 1].isdigit()):
            m2 = re.match(r"\.\s*\w+", masked[k:])
            k += m2.end()
        elif ch == "?":
            k += 1
        elif masked.startswith("::", k):
            m2 = re.match(r"::\s*(?:<[^()]*>|\w+)", masked[k:])
            if not m2:
                return False
            k += m2.end()
        elif ch.isspace():
            rest = masked[k:].lstrip()
            if rest.startswith(".") or rest.startswith("?"):
                k = n - len(rest)
            else:
                return False
        else:
            return False
    return True


def _in_call_slot(masked: str, start: int, end: int) -> bool:
    prev, _ = lexer.prev_significant(masked, start)
    nxt, _ = lexer.next_significant(masked, end)
    return prev in ("(", ",") and nxt in (")", ",")


def substitute_idents(expr: str, env: dict[str, str]) -> str:
    """Replace value uses of the names in ``env``; non-atomic values are parenthesized."""
    masked = lexer.mask_rust(expr)
    edits = []
    for m in re.finditer(r"(?<![A-Za-z0-9_])[A-Za-z_]\w*", masked):
        name = m.group(0)
        if name not in env:
            continue
        prev, _ = lexer.prev_significant(masked, m.start())
        nxt, _ = lexer.next_significant(masked, m.end())
        if prev in (".", "::", "fn", "let") or nxt in ("::", "!", "(") or (nxt == ":" and prev in ("{", ",")):
            continue
        value = env[name]
        if not (is_atomic(value) or _in_call_slot(masked, m.start(), m.end()) or masked.strip() == name):
            value = f"({value})"
        edits.append((m.start(), m.end(), value))
    out = expr
    for a, b, v in reversed(edits):
        out = out[:a] + v + out[b:]
    return out


def fill_placeholders(expr: str, args: dict[str, str]) -> str:
    masked = lexer.mask_rust(expr)
    edits = []
    for m in _ARG_RE.finditer(masked):
        value = args[m.group(1)].strip()
        if not (is_atomic(value) or _in_call_slot(masked, m.start(), m.end()) or masked.strip() == m.group(0)):
            value = f"({value})"
        edits.append((m.start(), m.end(), value))
    out = expr
    for a, b, v in reversed(edits):
        out = out[:a] + v + out[b:]
    return out


def needs_unsafe(expr: str) -> bool:
    masked = lexer.mask_rust(expr)
    if _UNSAFE_HINTS.search(masked):
        return True
    for m in re.finditer(r"\*", masked):
        prev, _ = lexer.prev_significant(masked, m.start())
        nxt, _ = lexer.next_significant(masked, m.end())
        if nxt in ("const", "mut"):  # `*const T` / `*mut T` type
            continue
        if prev in ("", "(", ",", "=", "&", "&&", "mut", "{", "[", "!", "-", "*", "return", ";"):
            return True
    return False


# ---------------------------------------------------------------------------
# extraction


def pair_params(p: WrapperPair) -> tuple[list[Param], list[Param]]:
    w = lexer.scan_functions(p.wrapper_text)[0]
    s = lexer.find_function(p.safe_text, p.safe_name)
    return w.params, (s.params if s else [])


def extract_conversions(p: WrapperPair) -> list[ConversionRule]:
    """One rule per argument slot of the safe call, composed through re-bindings.

    Raises ExtractionAmbiguous when the wrapper body is not a flat sequence
    of parameter re-bindings followed by the single tail call.
    """
    raw_params, _ = pair_params(p)
    names = [q.name for q in raw_params]
    stmts = wrapper_statements(p.wrapper_text)
    if not stmts:
        raise ExtractionAmbiguous(f"{p.base_name}: empty wrapper body")
    *lets, tail = stmts
    env = {n: _ARG.format(n) for n in names}
    for st in lets:
        m = _LET_RE.match(st.masked) if st.terminated else None
        if not m or m.group(2) not in env:
            raise ExtractionAmbiguous(f"{p.base_name}: non-let statement `{lexer.normalize_ws(st.text)[:60]}`")
        value = st.text[m.start(4) : m.end(4)].strip()
        env[m.group(2)] = substitute_idents(value, env)
    args = tail_call_args(tail, p.safe_name)
    if args is None:
        raise ExtractionAmbiguous(f"{p.base_name}: tail is not a single call to {p.safe_name}")
    rules = []
    for a in args:
        expr = substitute_idents(a, env)
        refs = _ARG_RE.findall(expr)
        if a in names:
            own = a
        elif refs:
            own = refs[0]
        else:
            own = ""
        rules.append(ConversionRule(own, expr, needs_unsafe(expr)))
    return rules


# ---------------------------------------------------------------------------
# fallback layers


@dataclass
class CallContext:
    """What a layer may know about one call site."""

    enclosing: FnHeader | None
    file_text: str
    aggregates: dict[str, str] = field(default_factory=dict)  # raw name -> safe name

    @property
    def in_safe_function(self) -> bool:
        return self.enclosing is not None and "unsafe" not in self.enclosing.qualifiers

    def type_of(self, arg: str) -> str | None:
        """Declared type of a plain identifier argument, if visible lexically."""
        arg = arg.strip()
        if not re.fullmatch(r"[A-Za-z_]\w*", arg) or self.enclosing is None:
            return None
        for q in self.enclosing.params:
            if q.name == arg:
                return q.type
        body = self.file_text[self.enclosing.body_open : self.enclosing.end]
        found = None
        for m in re.finditer(rf"\blet\s+(?:mut\s+)?{re.escape(arg)}\s*:\s*([^=;]+?)\s*=", body):
            found = m.group(1)
        return found


@dataclass
class LayerResult:
    expr: str
    consumed: int
    layer: int
    needs_unsafe_block: bool = False


def _ptr_parts(t: str) -> tuple[str, str] | None:
    m = _PTR.match(lexer.normalize_ws(t))
    return (m.group(1), m.group(2)) if m else None


def _layer1(arg: str, raw_t: str, safe_t: str, ctx: CallContext) -> str | None:
    t = ctx.type_of(arg)
    if t is not None and same_type(t, safe_t):
        return arg
    return None


def _layer2(arg: str, raw_t: str, safe_t: str, ctx: CallContext) -> str | None:
    ptr = _ptr_parts(raw_t)
    if not ptr:
        return None
    pointee = _strip_ffi(ptr[1]).split("::")[-1]
    safe = ctx.aggregates.get(pointee)
    if not safe:
        return None
    st = lexer.normalize_ws(safe_t)
    if re.fullmatch(rf"&\s*(?:'\w+\s+)?(?:crate::[\w:]*)?{re.escape(safe)}", st):
        return f"&{safe}::from(&*{arg})"
    if re.fullmatch(rf"&\s*(?:'\w+\s+)?mut\s+(?:crate::[\w:]*)?{re.escape(safe)}", st):
        return f"&mut {safe}::from(&*{arg})"
    if re.fullmatch(rf"(?:crate::[\w:]*)?{re.escape(safe)}", st):
        return f"{safe}::from(&*{arg})"
    return None


def _layer3(arg: str, raw_t: str, safe_t: str, ctx: CallContext) -> str | None:
    if lexer.normalize_ws(safe_t).startswith("Option<") and _NULL.match(lexer.normalize_ws(lexer.mask_rust(arg))):
        return "None"
    return None


_UNDO_PATTERNS = (
    re.compile(r"^(?P<inner>.+?)\s*\.\s*as_ptr\s*\(\s*\)$", re.S),
    re.compile(r"^(?P<inner>.+?)\s*\.\s*as_mut_ptr\s*\(\s*\)$", re.S),
    re.compile(r"^(?P<inner>&\s*(?:mut\s+)?.+?)\s+as\s+\*\s*(?:const|mut)\s+[^\s]+$", re.S),
    re.compile(r"^(?P<inner>[A-Za-z_]\w*)\s+as\s+\*\s*(?:const|mut)\s+[^\s]+$", re.S),
)


def _layer4(arg: str, raw_t: str, safe_t: str, ctx: CallContext) -> str | None:
    if not ctx.in_safe_function:
        return None
    masked = lexer.mask_rust(arg).strip()
    text = arg.strip()
    for k, pat in enumerate(_UNDO_PATTERNS):
        m = pat.match(masked)
        if not m:
            continue
        inner = text[m.start("inner") : m.end("inner")].strip()
        t = ctx.type_of(inner)
        if k == 3 and (t is None or not t.lstrip().startswith("&")):
            continue
        if t is not None and not same_type(t, safe_t):
            continue
        return inner
    return None


def _layer5(args: list[str], i: int, raw: list[Param], safe_t: str) -> str | None:
    if i + 1 >= len(raw):
        return None
    ptr = _ptr_parts(raw[i].type)
    if not ptr or not _INTEGER.match(_strip_ffi(raw[i + 1].type)) and not _INTEGER.match(lexer.normalize_ws(raw[i + 1].type)):
        return None
    st = lexer.normalize_ws(safe_t)
    m = re.fullmatch(r"&\s*(?:'\w+\s+)?(mut\s+)?\[\s*(.+?)\s*\]", st)
    if not m or not same_type(m.group(2), ptr[1]):
        return None
    fn = "from_raw_parts_mut" if m.group(1) else "from_raw_parts"
    length = args[i + 1].strip()
    if not is_atomic(length):
        length = f"({length})"
    return f"std::slice::{fn}({args[i].strip()}, {length} as usize)"


def _layer6(arg: str, raw_t: str, safe_t: str, ctx: CallContext) -> str | None:
    rt, st = lexer.normalize_ws(raw_t), lexer.normalize_ws(safe_t)
    if same_type(rt, st):
        return arg
    a = arg.strip()
    wrap = a if is_atomic(a) else f"({a})"
    ptr = _ptr_parts(rt)
    if ptr:
        kind, pointee = ptr
        p = _strip_ffi(pointee)
        if p in ("c_char", "i8", "u8") and re.fullmatch(r"&\s*(?:'\w+\s+)?(?:(?:std|core)::ffi::)?CStr", st):
            return f"std::ffi::CStr::from_ptr({a})"
        m = re.fullmatch(r"&\s*(?:'\w+\s+)?(mut\s+)?(.+)", st)
        if m and same_type(m.group(2), pointee):
            if m.group(1):
                return f"&mut *{wrap}" if kind == "mut" else None
            return f"&*{wrap}"
        m = re.fullmatch(r"Option<\s*&\s*(?:'\w+\s+)?(mut\s+)?(.+?)\s*>", st)
        if m and same_type(m.group(2), pointee):
            if m.group(1):
                return f"{wrap}.as_mut()" if kind == "mut" else None
            return f"{wrap}.as_ref()"
        return None
    if _NUMERIC.match(_strip_ffi(rt)) or _NUMERIC.match(rt):
        if st == "bool":
            return f"{wrap} != 0"
        if _NUMERIC.match(st) or _NUMERIC.match(_strip_ffi(st)):
            return f"{wrap} as {st}"
    return None


def fallback_conversion(
    args: list[str],
    i: int,
    raw: list[Param],
    safe_t: str,
    ctx: CallContext,
    layers: tuple[int, ...] = (1, 2, 3, 4, 5, 6),
) -> LayerResult | None:
    """First succeeding layer, in order, for the argument at raw index ``i``."""
    if i >= len(args):
        return None
    arg, raw_t = args[i], raw[i].type
    for layer in layers:
        if layer == 5:
            expr = _layer5(args, i, raw, safe_t)
            if expr is not None:
                return LayerResult(expr, 2, 5, True)
            continue
        fn = {1: _layer1, 2: _layer2, 3: _layer3, 4: _layer4, 6: _layer6}[layer]
        expr = fn(arg, raw_t, safe_t, ctx)
        if expr is not None:
            return LayerResult(expr, 1, layer, layer in (2, 6) and needs_unsafe(expr))
    return None


# ---------------------------------------------------------------------------
# scanning


def crate_sources(crate_dir: Path) -> list[str]:
    crate_dir = Path(crate_dir)
    return [p.relative_to(crate_dir).as_posix() for p in source_files(crate_dir, (".rs",))]


def scan_unsafe_casts(name: str, tree: Path) -> list[tuple[str, int]]:
    """Sites of ``name as *const`` / ``*mut`` / ``unsafe`` outside strings and comments."""
    tree = Path(tree)
    pat = re.compile(rf"(?<![A-Za-z0-9_.]){re.escape(name)}\s+as\s+(?:\*\s*(?:const|mut)\b|unsafe\b)")
    sites = []
    for rel in crate_sources(tree):
        text = (tree / rel).read_text()
        masked = lexer.mask_rust(text)
        for m in pat.finditer(masked):
            sites.append((rel, lexer.line_of(text, m.start())))
    return sites


def call_sites(masked: str, name: str) -> list[int]:
    """Offsets of ``name`` in call position (not definitions, methods or macros)."""
    out = []
    for m in re.finditer(rf"(?<![A-Za-z0-9_]){re.escape(name)}\s*\(", masked):
        prev, _ = lexer.prev_significant(masked, m.start())
        if prev in (".", "fn"):
            continue
        out.append(m.start())
    return out


def enclosing_function(text: str, masked: str, offset: int) -> FnHeader | None:
    best = None
    for h in lexer.scan_functions(text, masked, top_level_only=False):
        if h.body_open <= offset < h.end and (best is None or h.body_open > best.body_open):
            best = h
    return best


def module_path(rel: str) -> str:
    parts = Path(rel).with_suffix("").parts
    if parts and parts[0] == "src":
        parts = parts[1:]
    parts = list(parts)
    if parts and parts[-1] in ("main", "lib", "mod"):
        parts = parts[:-1]
    return "::".join(["crate", *parts])


def delete_item(text: str, hdr: FnHeader) -> str:
    """Remove a function with its attributes and the trailing newline."""
    start, end = hdr.start, hdr.end
    while end < len(text) and text[end] in " \t":
        end += 1
    if end < len(text) and text[end] == "\n":
        end += 1
    return text[:start] + text[end:]


# ---------------------------------------------------------------------------
# elimination


@dataclass
class _SiteRewrite:
    text: str
    layers: list[Layer]


class _Unconvertible(Exception):
    pass


def _convert_args(
    args: list[str],
    raw: list[Param],
    safe: list[Param],
    rules: list[ConversionRule] | None,
    ctx: CallContext,
) -> tuple[list[str], list[Layer]]:
    exprs: list[str] = []
    layers: list[Layer] = []
    if rules is not None:
        if len(args) != len(raw):
            raise _Unconvertible(f"call passes {len(args)} arguments, wrapper takes {len(raw)}")
        by_name = {q.name: a for q, a in zip(raw, args)}
        for j, rule in enumerate(rules):
            safe_t = safe[j].type if j < len(safe) else ""
            res = None
            if rule.param in by_name:
                i = [q.name for q in raw].index(rule.param)
                res = fallback_conversion(args, i, raw, safe_t, ctx, layers=(1, 3, 4))
            if res is not None:
                exprs.append(res.expr)
                layers.append(res.layer)
                continue
            expr = rule.instantiate(by_name)
            exprs.append(f"unsafe {{ {expr} }}" if rule.needs_unsafe_block else expr)
            layers.append(DIRECT)
        return exprs, layers
    i = 0
    for sp in safe:
        res = fallback_conversion(args, i, raw, sp.type, ctx)
        if res is None:
            raise _Unconvertible(f"no layer converts argument {i + 1} (`{args[i] if i < len(args) else ''}`)")
        exprs.append(f"unsafe {{ {res.expr} }}" if res.needs_unsafe_block else res.expr)
        layers.append(res.layer)
        i += res.consumed
    if i != len(args):
        raise _Unconvertible(f"{len(args) - i} argument(s) left unmatched")
    return exprs, layers


def rewrite_call_sites(
    text: str,
    name: str,
    safe_name: str,
    raw: list[Param],
    safe: list[Param],
    rules: list[ConversionRule] | None,
    aggregates: dict[str, str],
) -> _SiteRewrite:
    """Rewrite every call of ``name`` in ``text`` into a call of ``safe_name``."""
    layers_by_site: list[list[Layer]] = []
    while True:
        masked = lexer.mask_rust(text)
        sites = call_sites(masked, name)
        if not sites:
            break
        start = sites[-1]
        open_idx = masked.index("(", start)
        close = lexer.match_forward(masked, open_idx)
        if close < 0:
            raise _Unconvertible(f"unbalanced call of {name}")
        args = [text[a:b].strip() for a, b in lexer.split_top_level(masked, open_idx + 1, close, exprs=True)]
        ctx = CallContext(enclosing_function(text, masked, start), text, aggregates)
        exprs, layers = _convert_args(args, raw, safe, rules, ctx)
        layers_by_site.insert(0, layers)
        text = text[:start] + f"{safe_name}(" + ", ".join(exprs) + ")" + text[close + 1 :]
    return _SiteRewrite(text, [layer for site in layers_by_site for layer in site])


def rename_identifier(text: str, old: str, new: str) -> str:
    masked = lexer.mask_rust(text)
    for off in reversed(lexer.ident_occurrences(masked, old)):
        text = text[:off] + new + text[off + len(old) :]
    return text


def promote(text: str, name: str, wrapper: FnHeader) -> str:
    """Make ``name`` pub and carry over the wrapper's no_mangle/inline attributes."""
    hdr = lexer.find_function(text, name)
    if hdr is None:
        return text
    masked = lexer.mask_rust(text)
    fn_kw = masked.index("fn", hdr.header_start)
    quals = text[hdr.header_start : fn_kw]
    if not re.match(r"\s*pub\b", quals):
        text = text[: hdr.header_start] + "pub " + text[hdr.header_start :]
    indent = re.match(r"[ \t]*", text[hdr.header_start :]).group(0)
    present = [a.replace(" ", "") for a in hdr.attributes]
    extra = []
    for attr in wrapper.attributes:
        compact = attr.replace(" ", "")
        if ("no_mangle" in compact or compact.startswith("#[inline")) and compact not in present:
            extra.append(attr)
    if extra:
        ls = lexer.line_start(text, hdr.header_start)
        text = text[:ls] + "".join(f"{indent}{a}\n" for a in extra) + text[ls:]
    return text


def find_pair_files(crate_dir: Path, name: str) -> list[str]:
    out = []
    for rel in crate_sources(crate_dir):
        text = (Path(crate_dir) / rel).read_text()
        names = {h.name for h in lexer.scan_functions(text)}
        if name in names and name + SAFE_SUFFIX in names:
            out.append(rel)
    return out


def load_pair(text: str, name: str) -> WrapperPair:
    w = lexer.find_function(text, name)
    s = lexer.find_function(text, name + SAFE_SUFFIX)
    return WrapperPair(name, name + SAFE_SUFFIX, text[w.start : w.end], text[s.start : s.end])


def eliminate_wrapper(
    ws: Workspace,
    crate_dir: Path,
    name: str,
    suite: TestSuite,
    aggregates: dict[str, str] | None = None,
    timeout: float = 30.0,
) -> list[EliminationOutcome]:
    """Eliminate the pair ``name``/``name_safe``; returns the canonical outcome
    first, followed by one record per duplicate module."""
    crate_dir = Path(crate_dir)
    aggregates = aggregates or {}
    safe_name = name + SAFE_SUFFIX
    casts = scan_unsafe_casts(name, crate_dir)
    if casts:
        return [EliminationOutcome(name, EliminationStatus.DeferredUnsafeCast, unsafe_cast_sites=casts)]
    pair_files = find_pair_files(crate_dir, name)
    if not pair_files:
        return []
    canonical, duplicates = pair_files[0], pair_files[1:]
    text = (crate_dir / canonical).read_text()
    pair = load_pair(text, name)
    wrapper_hdr = lexer.find_function(text, name)
    raw, safe = pair_params(pair)
    try:
        rules: list[ConversionRule] | None = extract_conversions(pair)
    except ExtractionAmbiguous as exc:
        log.info("%s", exc)
        rules = None

    # affected files, fixed before the first edit
    affected = set(pair_files)
    for rel in crate_sources(crate_dir):
        masked = lexer.mask_rust((crate_dir / rel).read_text())
        if call_sites(masked, name) or lexer.ident_occurrences(masked, safe_name):
            affected.add(rel)
    affected_rel = sorted(affected)
    snap = ws.snapshot_files([ws.rel(crate_dir / r) for r in affected_rel], snap_id=f"tdwe-{name}")

    def rollback(detail: str, layers: list[Layer]) -> list[EliminationOutcome]:
        ws.restore(snap)
        ws.drop_snapshot(snap.id)
        return [EliminationOutcome(name, EliminationStatus.RolledBack, layers, files=affected_rel, detail=detail)]

    all_layers: list[Layer] = []
    try:
        # 1. call sites, rewritten to the temporary safe name
        for rel in affected_rel:
            path = crate_dir / rel
            body = path.read_text()
            if rel in pair_files:
                # the wrapper itself never calls `name`; keep it out of the scan
                w = lexer.find_function(body, name)
                head, wtext, tail = body[: w.start], body[w.start : w.end], body[w.end :]
                r1 = rewrite_call_sites(head, name, safe_name, raw, safe, rules, aggregates)
                r2 = rewrite_call_sites(tail, name, safe_name, raw, safe, rules, aggregates)
                all_layers += r1.layers + r2.layers
                body = r1.text + wtext + r2.text
            else:
                r = rewrite_call_sites(body, name, safe_name, raw, safe, rules, aggregates)
                all_layers += r.layers
                body = r.text
            path.write_text(body)
    except _Unconvertible as exc:
        return rollback(f"call site left unconverted: {exc}", all_layers)

    # 2. delete the wrapper; duplicates become re-exports
    path = crate_dir / canonical
    body = path.read_text()
    body = delete_item(body, lexer.find_function(body, name))
    path.write_text(body)
    target = module_path(canonical)
    for rel in duplicates:
        dpath = crate_dir / rel
        dbody = dpath.read_text()
        w = lexer.find_function(dbody, name)
        indent = re.match(r"[ \t]*", dbody[w.start :]).group(0)
        dbody = dbody[: w.start] + f"{indent}pub use {target}::{name};\n" + delete_item(dbody, w)[w.start :]
        dbody = delete_item(dbody, lexer.find_function(dbody, safe_name))
        dpath.write_text(dbody)

    # 3. rename and promote
    for rel in affected_rel:
        p = crate_dir / rel
        p.write_text(rename_identifier(p.read_text(), safe_name, name))
    path.write_text(promote(path.read_text(), name, wrapper_hdr))

    # 4. gate
    build = cargo_build(crate_dir)
    if not build.ok:
        return rollback("compile errors:\n" + build.diagnostics, all_layers)
    run = run_test_suite(crate_dir, suite, timeout)
    if not run.ok:
        return rollback("test failures:\n" + run.feedback(), all_layers)
    ws.drop_snapshot(snap.id)
    outcomes = [EliminationOutcome(name, EliminationStatus.Committed, all_layers, files=affected_rel)]
    outcomes += [
        EliminationOutcome(name, EliminationStatus.DeferredDuplicateSecondary, files=[rel], detail=f"re-exports {target}::{name}")
        for rel in duplicates
    ]
    return outcomes


def canonicalize_duplicates(occurrences: list[str]) -> tuple[str, list[str]]:
    """Canonical file (lexicographically smallest) and the re-exporting rest."""
    ordered = sorted(occurrences)
    return ordered[0], ordered[1:]


# ---------------------------------------------------------------------------
# residual unsafe blocks


def unsafe_blocks(text: str, masked: str | None = None) -> list[tuple[int, int, int]]:
    """(keyword start, brace open, brace close) of every ``unsafe { }`` block."""
    masked = masked if masked is not None else lexer.mask_rust(text)
    out = []
    for m in re.finditer(r"(?<![A-Za-z0-9_])unsafe\s*\{", masked):
        open_idx = m.end() - 1
        close = lexer.match_forward(masked, open_idx)
        if close > 0:
            out.append((m.start(), open_idx, close))
    return out


def _drop_unsafe(text: str, masked: str, kw: int, open_idx: int, close: int) -> str:
    inner = text[open_idx + 1 : close]
    inner_masked = masked[open_idx + 1 : close]
    is_expr = ";" not in inner_masked and "let " not in inner_masked and "\n" not in inner.strip()
    if is_expr and _in_call_slot(masked, kw, close + 1):
        return text[:kw] + inner.strip() + text[close + 1 :]
    end = kw + len("unsafe")
    while end < open_idx and text[end].isspace():
        end += 1
    return text[:kw] + text[end:]


def reduce_unsafe_constructs(crate_dir: Path) -> int:
    """Drop ``unsafe`` blocks (outside unsafe fns) whose removal still builds."""
    crate_dir = Path(crate_dir)
    removed = 0
    for rel in crate_sources(crate_dir):
        path = crate_dir / rel
        text = path.read_text()
        masked = lexer.mask_rust(text)
        fns = lexer.scan_functions(text, masked, top_level_only=False)
        candidates = []
        for kw, open_idx, close in unsafe_blocks(text, masked):
            owners = [h for h in fns if h.body_open < kw < h.end]
            if any("unsafe" in h.qualifiers for h in owners):
                continue
            candidates.append(kw)
        for kw in sorted(candidates, reverse=True):
            text = path.read_text()
            masked = lexer.mask_rust(text)
            block = next((b for b in unsafe_blocks(text, masked) if b[0] == kw), None)
            if block is None:
                continue
            path.write_text(_drop_unsafe(text, masked, *block))
            if cargo_build(crate_dir).ok:
                removed += 1
            else:
                path.write_text(text)
    return removed


# ---------------------------------------------------------------------------
# driver


def run_tdwe(
    ws: Workspace,
    crate_dir: Path,
    order: list[str],
    translated: set[str],
    suite: TestSuite,
    aggregates: dict[str, str] | None = None,
    timeout: float = 30.0,
    done: dict[str, dict] | None = None,
) -> list[EliminationOutcome]:
    """Eliminate every translated pair in leaf-first order and write the log.

    ``done`` holds log records of pairs already handled by an interrupted
    run; they are kept and not re-attempted.
    """
    log_path = ws.state_dir / "tdwe_log.json"
    records: list[dict] = list((done or {}).values())
    handled = set((done or {}).keys())
    outcomes: list[EliminationOutcome] = []
    for name in order:
        if name not in translated or name in handled:
            continue
        for o in eliminate_wrapper(ws, crate_dir, name, suite, aggregates, timeout):
            log.info("tdwe %s: %s %s", o.name, o.status.value, o.layer_used_per_arg)
            outcomes.append(o)
            records.append(o.to_dict())
        log_path.write_text(json.dumps({"eliminations": records}, indent=1) + "\n")
    removed = reduce_unsafe_constructs(crate_dir)
    log_path.write_text(json.dumps({"eliminations": records, "unsafe_blocks_removed": removed}, indent=1) + "\n")
    return outcomes


def read_log(ws: Workspace) -> dict:
    p = ws.state_dir / "tdwe_log.json"
    if not p.is_file():
        return {"eliminations": []}
    return json.loads(p.read_text())
