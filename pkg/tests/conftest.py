import pytest

# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {key}: {detail}")


@pytest.fixture
def record():
    def _record(key, passed, detail):
        ACCEPTANCE[str(key)] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'}  criterion {key}: {detail}")
        return passed
    return _record
