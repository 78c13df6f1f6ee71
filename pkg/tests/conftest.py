import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_registry import CRITERIA, RESULTS  # noqa: E402


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in sorted(CRITERIA.items()):
        status, seconds = RESULTS.get(n, ("NOT RUN", 0.0))
        tr.write_line(f"criterion {n:2d}: {status:<7} {title} ({seconds:.1f} s)")
    passed = sum(1 for s, _ in RESULTS.values() if s == "PASS")
    tr.write_line(f"acceptance: {passed}/{len(CRITERIA)} passed")
