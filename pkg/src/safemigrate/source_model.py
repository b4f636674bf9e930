"""Function/aggregate decomposition, call graph and translation order."""

from __future__ import annotations

import fnmatch
import heapq
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from . import lexer
from .lexer import FnHeader, Param

log = logging.getLogger(__name__)

EXCLUDE_MANIFEST = ".migrate-exclude"

# Identifiers that look like calls but never are crate functions.
CALL_KEYWORDS = lexer.RUST_KEYWORDS | {"Some", "Ok", "Err", "None", "Box", "Vec"}
C_KEYWORDS = frozenset(
    "if while for switch return sizeof do else case goto typedef struct union enum".split()
)

_CALL_RE = re.compile(r"(?<![A-Za-z0-9_])([A-Za-z_]\w*)\s*(?:::\s*<[^()]*>\s*)?\(")
_STATIC_RE = re.compile(r"\bstatic\s+(mut\s+)?([A-Za-z_]\w*)\s*:")
_STRUCT_RE = re.compile(r"\bstruct\s+([A-Za-z_]\w*)")
_USE_RE = re.compile(r"^[ \t]*(?:pub(?:\([^)]*\))?\s+)?use\s+[^;]+;", re.M)
_EXTERN_BLOCK_RE = re.compile(r'\b(?:unsafe\s+)?extern\s+"[^"]*"\s*\{')
RAW_TOKEN_RE = re.compile(r"\*\s*(?:const|mut)\b")


@dataclass
class FunctionRecord:
    name: str
    file: str
    span: tuple[int, int]
    text: str
    callees: list[str] = field(default_factory=list)
    globals: list[str] = field(default_factory=list)
    extern_blocks: list[str] = field(default_factory=list)
    imports: list[str] = field(default_factory=list)
    qualifiers: set[str] = field(default_factory=set)
    params: list[Param] = field(default_factory=list)
    ret: str = ""

    @property
    def signature(self) -> str:
        """Header text up to (not including) the body brace."""
        masked = lexer.mask_rust(self.text)
        return self.text[: masked.index("{", masked.index("fn "))].strip()


@dataclass
class CFunctionRecord:
    name: str
    file: str
    body: str
    ambiguous: bool = False


@dataclass
class RawAggregateRecord:
    name: str
    file: str
    text: str
    fields_raw: list[tuple[str, str]] = field(default_factory=list)
    span: tuple[int, int] = (0, 0)

    @property
    def has_raw_address_field(self) -> bool:
        return any(RAW_TOKEN_RE.search(t) for _, t in self.fields_raw)


@dataclass
class CallGraph:
    nodes: list[str]
    edges: set[tuple[str, str]]

    def callees_of(self, name: str) -> list[str]:
        return sorted(v for u, v in self.edges if u == name)

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for u, v in sorted(self.edges):
            adj[u].append(v)
        return adj


@dataclass
class TranslationOrder:
    sequence: list[str]
    scc_members: dict[str, int]


# ---------------------------------------------------------------------------
# file discovery


def _excluded_globs(tree: Path) -> list[str]:
    manifest = tree / EXCLUDE_MANIFEST
    if not manifest.is_file():
        return []
    return [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip() and not ln.startswith("#")]


def source_files(tree: Path, suffixes: tuple[str, ...]) -> list[Path]:
    tree = Path(tree)
    globs = _excluded_globs(tree)
    out = []
    for p in sorted(tree.rglob("*")):
        if not p.is_file() or p.suffix not in suffixes:
            continue
        rel = p.relative_to(tree).as_posix()
        if rel.split("/")[0] == "target":
            continue
        if any(fnmatch.fnmatch(rel, g) for g in globs):
            continue
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# C side

def decompose_c(tree: Path) -> tuple[list[CFunctionRecord], list[str]]:
    """Top-level C function definitions plus raw struct definition texts."""
    tree = Path(tree)
    files = source_files(tree, (".c", ".h"))
    if not files:
        raise FileNotFoundError(f"no .c/.h files under {tree}")
    records: list[CFunctionRecord] = []
    aggregates: list[str] = []
    for path in files:
        text = path.read_text(errors="replace")
        rel = path.relative_to(tree).as_posix()
        masked = lexer.mask_c(text)
        depths = lexer.brace_depths(masked)
        for m in re.finditer(r"\{", masked):
            k = m.start()
            if depths[k] != 0:
                continue
            close = lexer.match_forward(masked, k)
            if close < 0:
                log.warning("unbalanced braces in %s at offset %d; skipping", rel, k)
                continue
            head = masked[_stmt_start(masked, k) : k]
            if re.search(r"\b(struct|union|enum)\b[^()]*$", head):
                if re.search(r"\bstruct\b", head):
                    end = masked.find(";", close)
                    aggregates.append(text[_stmt_start(masked, k) : (end + 1 if end >= 0 else close + 1)].strip())
                continue
            if "=" in head:  # initializer
                continue
            rp = head.rfind(")")
            if rp < 0:
                continue
            lp_abs = lexer.match_backward(masked, _stmt_start(masked, k) + rp)
            if lp_abs < 0:
                continue
            before = masked[_stmt_start(masked, k) : lp_abs]
            nm = re.search(r"([A-Za-z_]\w*)\s*$", before)
            if not nm or nm.group(1) in C_KEYWORDS:
                continue
            start = _stmt_start(masked, k)
            records.append(CFunctionRecord(name=nm.group(1), file=rel, body=text[start : close + 1].strip()))
    counts: dict[str, int] = defaultdict(int)
    for r in records:
        counts[r.name] += 1
    for r in records:
        r.ambiguous = counts[r.name] > 1
    return records, aggregates


def _stmt_start(masked: str, k: int) -> int:
    """Start of the declaration that owns the brace at ``k``."""
    j = k - 1
    while j >= 0 and masked[j] not in ";}":
        j -= 1
    j += 1
    while j < k and masked[j].isspace():
        j += 1
    return j


# ---------------------------------------------------------------------------
# subject side


def body_callees(masked_body: str) -> list[str]:
    """Identifiers in call position, first-occurrence order, de-duplicated."""
    seen: list[str] = []
    for m in _CALL_RE.finditer(masked_body):
        name = m.group(1)
        if name in CALL_KEYWORDS:
            continue
        prev, _ = lexer.prev_significant(masked_body, m.start())
        if prev in (".", "fn", "!"):
            continue
        if name not in seen:
            seen.append(name)
    return seen


def collect_mutable_globals(texts: dict[str, str]) -> set[str]:
    names = set()
    for text in texts.values():
        masked = lexer.mask_rust(text)
        depths = lexer.brace_depths(masked)
        for m in _STATIC_RE.finditer(masked):
            if m.group(1) and depths[m.start()] == 0:
                names.add(m.group(2))
    return names


def extern_blocks(text: str, masked: str) -> list[tuple[str, set[str]]]:
    """(block text, declared names) for each extern "C" block."""
    out = []
    for m in _EXTERN_BLOCK_RE.finditer(masked):
        open_idx = masked.index("{", m.start())
        close = lexer.match_forward(masked, open_idx)
        if close < 0:
            continue
        body = masked[open_idx:close]
        declared = set(re.findall(r"\bfn\s+([A-Za-z_]\w*)", body))
        declared |= set(re.findall(r"\bstatic\s+(?:mut\s+)?([A-Za-z_]\w*)", body))
        out.append((text[m.start() : close + 1], declared))
    return out


def records_from_text(
    text: str, rel: str, mutable_globals: set[str] | None = None
) -> list[FunctionRecord]:
    masked = lexer.mask_rust(text)
    depths = lexer.brace_depths(masked)
    imports = [text[m.start() : m.end()].strip() for m in _USE_RE.finditer(masked) if depths[m.start()] == 0]
    blocks = extern_blocks(text, masked)
    records = []
    for hdr in lexer.scan_functions(text, masked):
        body = masked[hdr.body_open : hdr.end]
        callees = body_callees(body)
        idents = set(re.findall(r"[A-Za-z_]\w*", body))
        globs = sorted(idents & mutable_globals) if mutable_globals else []
        ext = [b for b, declared in blocks if declared & (set(callees) | idents)]
        records.append(
            FunctionRecord(
                name=hdr.name,
                file=rel,
                span=(hdr.start, hdr.end),
                text=text[hdr.start : hdr.end],
                callees=callees,
                globals=globs,
                extern_blocks=ext,
                imports=imports,
                qualifiers=hdr.qualifiers,
                params=hdr.params,
                ret=hdr.ret,
            )
        )
    return records


def aggregates_from_text(text: str, rel: str) -> list[RawAggregateRecord]:
    masked = lexer.mask_rust(text)
    depths = lexer.brace_depths(masked)
    out = []
    for m in _STRUCT_RE.finditer(masked):
        if depths[m.start()] != 0:
            continue
        ls = lexer.line_start(masked, m.start())
        if not re.fullmatch(r"\s*(pub(\([^)]*\))?\s+)?", masked[ls : m.start()]):
            continue
        k = m.end()
        while k < len(masked) and masked[k] not in "{;(":
            k += 1
        if k >= len(masked) or masked[k] != "{":
            continue
        close = lexer.match_forward(masked, k)
        if close < 0:
            continue
        start, _attrs = lexer.leading_attributes(text, masked, ls)
        fields = []
        for a, b in lexer.split_top_level(masked, k + 1, close):
            piece = text[a:b].strip()
            piece = re.sub(r"^pub(\([^)]*\))?\s+", "", piece)
            colon = piece.find(":")
            if colon > 0:
                fields.append((piece[:colon].strip(), piece[colon + 1 :].strip()))
        out.append(
            RawAggregateRecord(
                name=m.group(1), file=rel, text=text[start : close + 1], fields_raw=fields, span=(start, close + 1)
            )
        )
    return out


def decompose_subject(tree: Path) -> tuple[list[FunctionRecord], list[RawAggregateRecord]]:
    tree = Path(tree)
    texts = {p.relative_to(tree).as_posix(): p.read_text() for p in source_files(tree, (".rs",))}
    mut_globals = collect_mutable_globals(texts)
    records: list[FunctionRecord] = []
    aggregates: list[RawAggregateRecord] = []
    for rel, text in texts.items():
        records.extend(records_from_text(text, rel, mut_globals))
        aggregates.extend(aggregates_from_text(text, rel))
    return records, aggregates


# ---------------------------------------------------------------------------
# graph


def build_call_graph(records: list[FunctionRecord]) -> CallGraph:
    local = {r.name for r in records}
    edges = set()
    for r in records:
        for c in r.callees:
            if c in local:
                edges.add((r.name, c))
    return CallGraph(nodes=sorted(local), edges=edges)


def strongly_connected(graph: CallGraph) -> list[list[str]]:
    """Tarjan's algorithm, iterative; members of each component sorted."""
    adj = graph.adjacency()
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[list[str]] = []
    counter = 0
    for root in graph.nodes:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            succs = adj[v]
            if i < len(succs):
                work.append((v, i + 1))
                w = succs[i]
                if w not in index:
                    work.append((w, 0))
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def leaf_first_order(graph: CallGraph) -> TranslationOrder:
    """Callees before callers; ties and SCC members broken by name."""
    comps = strongly_connected(graph)
    comp_of = {n: i for i, comp in enumerate(comps) for n in comp}
    pending: dict[int, set[int]] = {i: set() for i in range(len(comps))}
    dependents: dict[int, set[int]] = defaultdict(set)
    for u, v in graph.edges:
        cu, cv = comp_of[u], comp_of[v]
        if cu != cv:
            pending[cu].add(cv)
            dependents[cv].add(cu)
    ready = [(comps[i][0], i) for i, deps in pending.items() if not deps]
    heapq.heapify(ready)
    sequence: list[str] = []
    scc_members: dict[str, int] = {}
    rank = 0
    while ready:
        _, ci = heapq.heappop(ready)
        for name in comps[ci]:
            sequence.append(name)
            scc_members[name] = rank
        rank += 1
        for d in dependents[ci]:
            pending[d].discard(ci)
            if not pending[d]:
                heapq.heappush(ready, (comps[d][0], d))
    return TranslationOrder(sequence=sequence, scc_members=scc_members)


@dataclass
class SourcePair:
    subject: FunctionRecord
    c_hint: CFunctionRecord | None
    ambiguous: bool = False


def map_c_to_subject(
    c_records: list[CFunctionRecord], subject_records: list[FunctionRecord]
) -> dict[str, SourcePair]:
    by_name: dict[str, list[CFunctionRecord]] = defaultdict(list)
    for r in c_records:
        by_name[r.name].append(r)
    out = {}
    for rec in subject_records:
        cands = by_name.get(rec.name, [])
        if len(cands) > 1:
            log.info("C name %s is ambiguous (%d definitions); no hint", rec.name, len(cands))
            out[rec.name] = SourcePair(rec, None, ambiguous=True)
        else:
            out[rec.name] = SourcePair(rec, cands[0] if cands else None)
    return out


def function_header(text: str, name: str) -> FnHeader | None:
    return lexer.find_function(text, name)
