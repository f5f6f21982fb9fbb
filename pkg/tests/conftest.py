"""Shared fixtures and the acceptance summary printed after the run."""
from collections import defaultdict

#: criterion number -> list of (check name, passed, detail)
ACCEPTANCE = defaultdict(list)

TITLES = {
    1: "ADO combinatorics",
    2: "RC mapping closed forms",
    3: "spin-boson dynamics",
    4: "SIAM steady state and DOS",
    5: "TIAM coherence revival",
    6: "property suites",
}


def record(criterion: int, name: str, passed: bool, detail: str = ""):
    ACCEPTANCE[criterion].append((name, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(TITLES):
        checks = ACCEPTANCE.get(c)
        if not checks:
            tr.write_line(f"criterion {c} ({TITLES[c]}): NOT RUN")
            continue
        ok = all(p for _, p, _ in checks)
        tr.write_line(f"criterion {c} ({TITLES[c]}): {'PASS' if ok else 'FAIL'}")
        for name, p, detail in checks:
            tr.write_line(f"    [{'ok' if p else 'FAIL'}] {name}: {detail}")
