import sys


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion, independent of -q/-v."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    sys.stderr.write(f"\nACCEPTANCE {name}: {outcome}\n")
    sys.stderr.flush()
