"""Shared pytest hooks: print one PASS/FAIL line per acceptance criterion."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = None
    for name in ("test_acceptance", "tests.test_acceptance"):
        if name in sys.modules:
            mod = sys.modules[name]
            break
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {word} - {detail}")
