import re


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the measured values."""
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if not m or (outcome != "error" and rep.when != "call"):
                continue
            props = dict(rep.user_properties)
            rows[int(m.group(1))] = ("PASS" if outcome == "passed" else "FAIL", props.get("detail", ""))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(rows):
        verdict, detail = rows[num]
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {detail}")
