import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(results, key=lambda s: int(s.split(".")[0].split()[-1])):
        terminalreporter.write_line(line)
