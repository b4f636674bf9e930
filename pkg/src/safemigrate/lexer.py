"""Lexical helpers shared by every source-manipulating module.

Nothing here parses a grammar.  The central trick is *masking*: string
literals, character literals and comments are overwritten with spaces
(newlines kept, string delimiters kept) so that brace counting, regex
searches and token classification can run on the masked copy while offsets
stay valid in the original text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_RAW_STR_RE = re.compile(r'r(#*)"')

RUST_KEYWORDS = frozenset(
    """as async await break const continue crate dyn else enum extern false fn for
    if impl in let loop match mod move mut pub ref return self Self static struct
    super trait true type union unsafe use where while""".split()
)


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _blank(buf: list[str], start: int, end: int) -> None:
    for k in range(start, end):
        if buf[k] != "\n":
            buf[k] = " "


def mask_rust(text: str) -> str:
    """Return ``text`` with Rust comments and literal contents blanked."""
    buf = list(text)
    n = len(text)
    i = 0
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            _blank(buf, i, j)
            i = j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            depth, j = 1, i + 2
            while j < n and depth:
                if text.startswith("/*", j):
                    depth += 1
                    j += 2
                elif text.startswith("*/", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            _blank(buf, i, j)
            i = j
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            _blank(buf, i + 1, min(j, n))
            i = j + 1
        elif c == "'":
            if i + 1 < n and text[i + 1] == "\\":
                j = i + 3
                while j < n and text[j] != "'":
                    j += 1
                _blank(buf, i + 1, min(j, n))
                i = j + 1
            elif i + 2 < n and text[i + 2] == "'":
                _blank(buf, i + 1, i + 2)
                i += 3
            else:
                i += 1  # lifetime or label
        elif _is_ident_char(c):
            j = i + 1
            while j < n and _is_ident_char(text[j]):
                j += 1
            word = text[i:j]
            m = _RAW_STR_RE.match(text, j - 1) if word in ("r", "br") else None
            if m:
                closer = '"' + m.group(1)
                body = m.end()
                k = text.find(closer, body)
                k = n if k < 0 else k
                _blank(buf, body, k)
                i = k + len(closer)
            else:
                i = j
        else:
            i += 1
    return "".join(buf)


def mask_c(text: str) -> str:
    """Blank C comments, literal contents and preprocessor lines."""
    buf = list(text)
    n = len(text)
    i = 0
    at_line_start = True
    while i < n:
        c = text[i]
        if c == "\n":
            at_line_start = True
            i += 1
            continue
        if at_line_start and c == "#":
            j = i
            while j < n:
                k = text.find("\n", j)
                k = n if k < 0 else k
                if k > 0 and text[k - 1] == "\\" and k < n:
                    j = k + 1
                    continue
                j = k
                break
            _blank(buf, i, j)
            i = j
            continue
        if not c.isspace():
            at_line_start = False
        if text.startswith("//", i):
            j = text.find("\n", i)
            j = n if j < 0 else j
            _blank(buf, i, j)
            i = j
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            _blank(buf, i, j)
            i = j
        elif c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            _blank(buf, i + 1, min(j, n))
            i = j + 1
        else:
            i += 1
    return "".join(buf)


_PAIRS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {v: k for k, v in _PAIRS.items()}


def match_forward(masked: str, open_idx: int) -> int:
    """Index of the bracket closing the one at ``open_idx`` (-1 if unbalanced)."""
    opener = masked[open_idx]
    closer = _PAIRS[opener]
    depth = 0
    for k in range(open_idx, len(masked)):
        ch = masked[k]
        if ch == opener:
            depth += 1
        elif ch == closer:
            depth -= 1
            if depth == 0:
                return k
    return -1


def match_backward(masked: str, close_idx: int) -> int:
    closer = masked[close_idx]
    opener = _CLOSERS[closer]
    depth = 0
    for k in range(close_idx, -1, -1):
        ch = masked[k]
        if ch == closer:
            depth += 1
        elif ch == opener:
            depth -= 1
            if depth == 0:
                return k
    return -1


def brace_depths(masked: str) -> list[int]:
    """Curly-brace depth *before* each character."""
    depths = [0] * (len(masked) + 1)
    d = 0
    for k, ch in enumerate(masked):
        depths[k] = d
        if ch == "{":
            d += 1
        elif ch == "}":
            d = max(0, d - 1)
    depths[len(masked)] = d
    return depths


def split_top_level(
    masked: str, start: int, end: int, sep: str = ",", exprs: bool = False
) -> list[tuple[int, int]]:
    """Split ``masked[start:end]`` on ``sep`` outside (), [], {} and <>.

    Returns spans into the original string; blank pieces are dropped.  The
    ``>`` of ``->``/``=>`` never closes an angle bracket.  With ``exprs`` set,
    ``<`` only opens a bracket in turbofish position (``::<``).
    """
    spans = []
    depth = 0
    angle = 0
    piece = start
    for k in range(start, end):
        ch = masked[k]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "<" and (not exprs or masked[max(0, k - 2) : k] == "::"):
            angle += 1
        elif ch == ">" and angle > 0 and masked[k - 1] not in "-=":
            angle -= 1
        elif ch == sep and depth == 0 and angle == 0:
            spans.append((piece, k))
            piece = k + 1
    spans.append((piece, end))
    return [(a, b) for a, b in spans if masked[a:b].strip()]


def line_of(text: str, offset: int) -> int:
    """1-based line number of ``offset``."""
    return text.count("\n", 0, offset) + 1


def line_start(text: str, offset: int) -> int:
    return text.rfind("\n", 0, offset) + 1


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def prev_significant(masked: str, idx: int) -> tuple[str, int]:
    """The significant token ending just before ``idx`` and its start offset."""
    k = idx - 1
    while k >= 0 and masked[k].isspace():
        k -= 1
    if k < 0:
        return "", -1
    if _is_ident_char(masked[k]):
        j = k
        while j > 0 and _is_ident_char(masked[j - 1]):
            j -= 1
        return masked[j : k + 1], j
    if k > 0 and masked[k - 1 : k + 1] in ("::", "->", "=>", "&&", "||", "==", "!=", "<=", ">=", ".."):
        return masked[k - 1 : k + 1], k - 1
    return masked[k], k


def next_significant(masked: str, idx: int) -> tuple[str, int]:
    k = idx
    n = len(masked)
    while k < n and masked[k].isspace():
        k += 1
    if k >= n:
        return "", n
    if _is_ident_char(masked[k]):
        j = k
        while j < n and _is_ident_char(masked[j]):
            j += 1
        return masked[k:j], k
    return masked[k], k


@dataclass
class Param:
    name: str
    type: str
    mutable: bool = False


@dataclass
class FnHeader:
    """Parsed header of one Rust function item."""

    name: str
    start: int  # first byte of leading attributes
    header_start: int  # first byte of qualifiers
    body_open: int
    end: int  # one past the closing brace
    params: list[Param]
    ret: str
    qualifiers: set[str]
    attributes: list[str] = field(default_factory=list)
    params_span: tuple[int, int] = (0, 0)

    def signature_key(self) -> tuple:
        return (
            self.name,
            tuple(normalize_ws(p.type) for p in self.params),
            normalize_ws(self.ret),
        )


_FN_RE = re.compile(r"\bfn\s+([A-Za-z_]\w*)")
_QUAL_RE = re.compile(
    r'^(?P<pub>pub(?:\s*\([^)]*\))?\s+)?(?:const\s+)?(?:async\s+)?(?P<unsafe>unsafe\s+)?'
    r'(?P<extern>extern(?:\s+"[^"]*")?\s+)?$'
)


def leading_attributes(text: str, masked: str, item_line_start: int) -> tuple[int, list[str]]:
    """Walk backwards over ``#[...]`` attributes preceding an item."""
    pos = item_line_start
    attrs: list[str] = []
    while True:
        k = pos - 1
        while k >= 0 and masked[k].isspace():
            k -= 1
        if k < 0 or masked[k] != "]":
            break
        open_idx = match_backward(masked, k)
        if open_idx <= 0 or masked[open_idx - 1] != "#":
            break
        hash_idx = open_idx - 1
        ls = line_start(masked, hash_idx)
        if masked[ls:hash_idx].strip():
            break
        attrs.insert(0, text[hash_idx : k + 1])
        pos = ls
    return pos, attrs


def parse_params(text: str, masked: str, start: int, end: int) -> list[Param]:
    params = []
    for a, b in split_top_level(masked, start, end):
        piece = text[a:b].strip()
        mpiece = masked[a:b].strip()
        colon = _top_level_colon(mpiece)
        if colon < 0:
            params.append(Param(name=piece, type=""))
            continue
        pat = piece[:colon].strip()
        typ = piece[colon + 1 :].strip()
        mutable = False
        if pat.startswith("mut "):
            mutable = True
            pat = pat[4:].strip()
        params.append(Param(name=pat, type=typ, mutable=mutable))
    return params


def _top_level_colon(s: str) -> int:
    depth = 0
    for k, ch in enumerate(s):
        if ch in "([{<":
            depth += 1
        elif ch in ")]}>":
            depth -= 1
        elif ch == ":" and depth == 0:
            if (k + 1 < len(s) and s[k + 1] == ":") or (k > 0 and s[k - 1] == ":"):
                continue
            return k
    return -1


def qualifiers_of(qual_text: str, attrs: list[str]) -> set[str]:
    q: set[str] = set()
    m = _QUAL_RE.match(qual_text.strip() + " " if qual_text.strip() else "")
    if m:
        if m.group("pub"):
            q.add("pub")
        if m.group("unsafe"):
            q.add("unsafe")
        if m.group("extern"):
            q.add("extern-C")
    for a in attrs:
        compact = a.replace(" ", "")
        if "no_mangle" in compact:
            q.add("no-mangle")
        if compact.startswith("#[inline"):
            q.add("inline")
    return q


def scan_functions(text: str, masked: str | None = None, top_level_only: bool = True) -> list[FnHeader]:
    """All function items with bodies, in file order."""
    if masked is None:
        masked = mask_rust(text)
    depths = brace_depths(masked)
    found = []
    for m in _FN_RE.finditer(masked):
        if top_level_only and depths[m.start()] != 0:
            continue
        hdr = _parse_fn_at(text, masked, m)
        if hdr is not None:
            found.append(hdr)
    return found


def _parse_fn_at(text: str, masked: str, m: re.Match) -> FnHeader | None:
    ls = line_start(masked, m.start())
    qual = masked[ls : m.start()]
    if not _QUAL_RE.match(qual.strip() + " " if qual.strip() else ""):
        return None
    k = m.end()
    while k < len(masked) and masked[k].isspace():
        k += 1
    if k < len(masked) and masked[k] == "<":
        depth = 0
        while k < len(masked):
            if masked[k] == "<":
                depth += 1
            elif masked[k] == ">" and masked[k - 1] != "-":
                depth -= 1
                if depth == 0:
                    k += 1
                    break
            k += 1
        while k < len(masked) and masked[k].isspace():
            k += 1
    if k >= len(masked) or masked[k] != "(":
        return None
    pclose = match_forward(masked, k)
    if pclose < 0:
        return None
    j = pclose + 1
    while j < len(masked) and masked[j] not in "{;":
        j += 1
    if j >= len(masked) or masked[j] == ";":
        return None
    body_close = match_forward(masked, j)
    if body_close < 0:
        return None
    tail = text[pclose + 1 : j].strip()
    ret = ""
    if tail.startswith("->"):
        ret = tail[2:].strip()
        w = re.search(r"\bwhere\b", ret)
        if w:
            ret = ret[: w.start()].strip()
    start, attrs = leading_attributes(text, masked, ls)
    params = parse_params(text, masked, k + 1, pclose)
    return FnHeader(
        name=m.group(1),
        start=start,
        header_start=ls,
        body_open=j,
        end=body_close + 1,
        params=params,
        ret=ret,
        qualifiers=qualifiers_of(qual, attrs),
        attributes=attrs,
        params_span=(k + 1, pclose),
    )


def find_function(text: str, name: str) -> FnHeader | None:
    for hdr in scan_functions(text):
        if hdr.name == name:
            return hdr
    return None


def ident_occurrences(masked: str, name: str) -> list[int]:
    """Offsets of ``name`` as a whole identifier in masked text."""
    pat = re.compile(r"(?<![A-Za-z0-9_])" + re.escape(name) + r"(?![A-Za-z0-9_])")
    return [m.start() for m in pat.finditer(masked)]


def strip_code_fences(text: str) -> str:
    """Pull code out of markdown fences if the response used them."""
    blocks = re.findall(r"```[a-zA-Z]*\n(.*?)```", text, flags=re.S)
    return "\n".join(blocks) if blocks else text
