import pytest

from helpers import FIXTURES
from safemigrate.buildtools import TestSuite
from safemigrate.errors import NoSafeRule, NotFound
from safemigrate.tools import (
    TOOL_MANIFEST,
    TOOL_NAMES,
    AccessKind,
    RulePattern,
    Shape,
    StaticMutUsage,
    ToolSuite,
    UsageSite,
    ValueKind,
    classify_static_mut_usages,
    select_replacement_rule,
    shape_of,
    static_mut_names,
    value_kind_of,
)
from safemigrate.workspace import Workspace, copy_crate, tree_hash

STATIC_MUT = FIXTURES / "static_mut"

# variable -> (rule index, signal reachable); hand-derived from the fixture
MATRIX = {
    "LIMIT": (1, False),
    "BANNER": (2, False),
    "VERBOSE": (3, False),
    "HITS": (4, False),
    "TABLE": (5, False),
    "CAUGHT": (4, True),
}


def rule_for(name, crate=STATIC_MUT):
    u = classify_static_mut_usages(name, crate)
    return u, select_replacement_rule(u, value_kind_of(u.initializer), shape_of(u.decl_type))


@pytest.mark.parametrize("name", sorted(MATRIX))
def test_rule_matrix(name):
    u, rule = rule_for(name)
    assert (rule.index, u.signal_reachable) == MATRIX[name]
    assert RulePattern(rule.pattern).value == rule.pattern.value


def test_signal_reachable_complex_has_no_rule():
    with pytest.raises(NoSafeRule):
        rule_for("PENDING")


def test_site_classification():
    u = classify_static_mut_usages("TABLE", STATIC_MUT)
    assert [(s.kind, s.op) for s in u.sites if s.function == "record"] == [
        (AccessKind.Read, ""),
        (AccessKind.Write, "="),
        (AccessKind.Read, ""),
        (AccessKind.Write, "+="),
    ]
    assert u.decl_type == "Table"
    caught = classify_static_mut_usages("CAUGHT", STATIC_MUT)
    # reached through on_signal -> note; the read in main is not
    assert [(s.function, s.signal_reachable) for s in caught.sites] == [("note", True), ("main", False)]
    with pytest.raises(NotFound):
        classify_static_mut_usages("NOPE", STATIC_MUT)


def test_address_of_counts_as_write(tmp_path):
    (tmp_path / "src").mkdir()
    (tmp_path / "src/main.rs").write_text(
        "static mut N: i32 = 0;\nfn bump(p: *mut i32) {}\nfn main() { unsafe { bump(&mut N); bump(std::ptr::addr_of_mut!(N)); } }\n"
    )
    u = classify_static_mut_usages("N", tmp_path)
    assert [s.kind for s in u.sites] == [AccessKind.AddressOf, AccessKind.AddressOf]
    assert len(u.writes) == 2


def site(kind, op="", signal=False):
    return UsageSite("src/main.rs", 1, kind, signal, "f", op)


def test_selector_skips_rules_3_and_5_when_signal_reachable():
    once = StaticMutUsage("X", [site(AccessKind.Write, "=", signal=True)])
    assert select_replacement_rule(once, ValueKind.CompileTime, Shape.Scalar).index == 4
    once.sites[0].signal_reachable = False
    assert select_replacement_rule(once, ValueKind.CompileTime, Shape.Scalar).index == 3


@pytest.mark.parametrize("vk", list(ValueKind))
@pytest.mark.parametrize("shape", list(Shape))
@pytest.mark.parametrize("signal", [False, True])
@pytest.mark.parametrize("writes", [[], ["="], ["+="], ["=", "="], ["&"]])
def test_selector_is_total_and_restricted(vk, shape, signal, writes):
    sites = [site(AccessKind.Read, signal=signal)]
    for w in writes:
        sites.append(site(AccessKind.AddressOf if w == "&" else AccessKind.Write, "" if w == "&" else w, signal))
    u = StaticMutUsage("X", sites)
    if signal and writes and shape is Shape.Complex:
        with pytest.raises(NoSafeRule):
            select_replacement_rule(u, vk, shape)
        return
    rule = select_replacement_rule(u, vk, shape)
    if signal:
        assert rule.index in (1, 2, 4)


def test_value_kind_and_shape():
    assert value_kind_of("0") is ValueKind.CompileTime
    assert value_kind_of("-1 as libc::c_int") is ValueKind.CompileTime
    assert value_kind_of("make()") is ValueKind.RuntimeInit
    assert shape_of("libc::c_int") is Shape.Scalar
    assert shape_of("usize") is Shape.Scalar
    assert shape_of("[u8; 4]") is Shape.Complex


def test_static_mut_names_skip_extern_blocks(tmp_path):
    (tmp_path / "src").mkdir()
    (tmp_path / "src/main.rs").write_text(
        'extern "C" {\n    static mut environ: *mut *mut u8;\n}\nstatic mut A: i32 = 1;\nfn main() {}\n'
    )
    assert static_mut_names(tmp_path) == ["A"]
    assert static_mut_names(STATIC_MUT) == ["BANNER", "CAUGHT", "HITS", "LIMIT", "PENDING", "TABLE", "VERBOSE"]


# -- tool dispatch -----------------------------------------------------------


@pytest.fixture
def tools(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.create_layout()
    copy_crate(STATIC_MUT, ws.rust_safe_remap)
    suite = TestSuite(tmp_path / "suite")
    return ToolSuite(ws, ws.rust_safe_remap, suite, scope="sm")


def test_manifest_has_seventeen_tools():
    assert len(TOOL_NAMES) == 17 == len(set(TOOL_NAMES))
    cats = {t["category"] for t in TOOL_MANIFEST}
    assert cats == {"Navigation", "Modification", "Analysis", "Verification", "Control"}


def test_malformed_calls_never_raise(tools):
    r = tools.dispatch("no_such_tool", {})
    assert not r.ok and "unknown tool" in r.diagnostics
    assert not tools.dispatch("replace", {"path": "src/main.rs"}).ok
    assert "unknown argument" in tools.dispatch("list_files", {"x": 1}).diagnostics
    assert "type integer" in tools.dispatch("read_file", {"path": "src/main.rs", "start": "1"}).diagnostics
    assert not tools.dispatch("read_file", ["src/main.rs"]).ok
    assert "escapes" in tools.dispatch("read_file", {"path": "../../etc/passwd"}).diagnostics
    assert not tools.dispatch("grep", {"pattern": "("}).ok
    assert not tools.dispatch("read_function", {"name": "missing"}).ok
    assert tools.dispatch("list_files", None).payload == "src/main.rs"


def test_navigation(tools):
    g = tools.dispatch("grep", {"pattern": r"static mut HITS", "context": 1})
    assert g.ok and "src/main.rs:19:" in g.payload and "src/main.rs-18-" in g.payload
    assert tools.dispatch("grep", {"pattern": "zzz"}).payload == "no matches"
    r = tools.dispatch("read_file", {"path": "src/main.rs", "start": 0, "end": 2})
    assert r.payload.splitlines()[0].split() == ["1", "#![allow(static_mut_refs)]"]
    tail = tools.dispatch("read_file", {"path": "src/main.rs", "start": 60, "end": 999}).payload.splitlines()
    assert tail[-1].split() == [str(59 + len(tail)), "}"]
    f = tools.dispatch("read_function", {"name": "note"})
    assert f.payload.startswith("// src/main.rs:") and "CAUGHT += 1" in f.payload
    sigs = tools.dispatch("get_function_signatures", {"path": "src/main.rs"}).payload
    assert 'extern "C" fn on_signal(sig: libc::c_int)' in sigs


def test_replace_requires_unique_match(tools):
    before = tree_hash(tools.crate_dir)
    assert not tools.dispatch("replace", {"path": "src/main.rs", "old": "unsafe {", "new": "{"}).ok
    assert tree_hash(tools.crate_dir) == before
    assert tools.dispatch("replace", {"path": "src/main.rs", "old": "HITS = HITS.max(1);", "new": ""}).ok
    assert "HITS.max" not in (tools.crate_dir / "src/main.rs").read_text()


def test_batch_replace_is_atomic(tools):
    before = tree_hash(tools.crate_dir)
    edits = [
        {"path": "src/main.rs", "old": "static mut LIMIT", "new": "static LIMIT"},
        {"path": "src/main.rs", "old": "TABLE", "new": "T"},
    ]
    r = tools.dispatch("batch_replace", {"edits": edits})
    assert not r.ok and "edit 1" in r.diagnostics
    assert tree_hash(tools.crate_dir) == before
    r = tools.dispatch("batch_replace", {"edits": edits[:1]})
    assert r.ok and "static LIMIT" in (tools.crate_dir / "src/main.rs").read_text()


def test_regex_and_function_edits(tools):
    r = tools.dispatch("regex_replace", {"path": "src/main.rs", "pattern": r"static mut (LIMIT): (\S+)", "template": r"static \1: \2"})
    assert r.ok and "static LIMIT: libc::c_int" in (tools.crate_dir / "src/main.rs").read_text()
    assert not tools.dispatch("regex_replace", {"path": "src/main.rs", "pattern": "nothing_here", "template": ""}).ok
    assert tools.dispatch("replace_function", {"name": "signal", "new_text": "fn signal(_s: i32, _h: extern \"C\" fn(i32)) {}"}).ok
    assert tools.dispatch("delete_function", {"name": "note"}).ok
    text = (tools.crate_dir / "src/main.rs").read_text()
    assert "fn note" not in text and "fn signal(_s: i32" in text


def test_find_static_mut_usages_tool(tools):
    out = tools.dispatch("find_static_mut_usages", {"name": "CAUGHT"}).payload
    assert "signal-reachable: True" in out and "suggested rule: 4 (AtomicScalar)" in out
    assert "[signal]" in out
    assert "suggested rule: none" in tools.dispatch("find_static_mut_usages", {"name": "PENDING"}).payload
    assert not tools.dispatch("find_static_mut_usages", {"name": "NOPE"}).ok


def test_self_reflect(tools):
    out = tools.dispatch("self_reflect", {}).payload
    assert "unsafe blocks: 3" in out and "unsafe functions: 0" in out


def test_compile_and_tests_and_checkpoints(tools):
    assert tools.dispatch("compile", {}).ok
    assert tools.dispatch("run_tests", {}).payload == "0/0 vectors passed"
    assert tools.dispatch("checkpoint", {"name": "start"}).ok
    before = tree_hash(tools.crate_dir)
    tools.dispatch("replace", {"path": "src/main.rs", "old": "fn main() {", "new": "fn main() { let x: i32 = \"s\";"})
    r = tools.dispatch("compile", {"mode": "release"})
    assert not r.ok and "mismatched types" in r.diagnostics
    assert not tools.dispatch("run_tests", {}).ok
    assert tools.dispatch("rollback", {"name": "start"}).ok
    assert tree_hash(tools.crate_dir) == before
    assert not tools.dispatch("rollback", {"name": "never"}).ok
    assert tools.dispatch("complete_task", {"summary": "done"}).ok
