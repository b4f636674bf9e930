"""Collects the acceptance verdicts and prints them at the end of the run."""

ACCEPTANCE: dict[int, list[tuple[str, bool]]] = {}

TITLES = {
    1: "live scaffold after every step",
    2: "rollback exactness",
    3: "wrapper elimination fidelity",
    4: "unsafe-cast deferral",
    5: "verification gate soundness",
    6: "static mut rule table",
    7: "stall detection",
    8: "metrics oracles and properties",
    9: "determinism of replayed runs",
    10: "resumability",
    11: "leaf-first ordering",
}


def record(criterion: int, part: str, passed: bool) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((part, passed))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for n in sorted(TITLES):
        parts = ACCEPTANCE.get(n)
        if not parts:
            tr.write_line(f"criterion {n:>2} ({TITLES[n]}): NOT RUN")
            continue
        ok = all(p for _, p in parts)
        failed = [name for name, p in parts if not p]
        suffix = f" [failed: {', '.join(failed)}]" if failed else f" [{len(parts)} checks]"
        tr.write_line(f"criterion {n:>2} ({TITLES[n]}): {'PASS' if ok else 'FAIL'}{suffix}")
