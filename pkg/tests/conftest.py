import pytest

ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for an acceptance criterion around a block of checks."""
    class _Recorder:
        def __init__(self):
            self.name = None
            self.notes = []

        def __call__(self, name):
            self.name = name
            self.notes = []
            return self

        def note(self, text):
            """Attach a measured value to the summary line."""
            self.notes.append(text)

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            status = "PASS" if exc_type is None else "FAIL"
            detail = "" if exc is None else f" ({type(exc).__name__}: {str(exc).splitlines()[0][:160]})"
            ACCEPTANCE_LINES.append(f"{status}  {self.name}{detail}")
            ACCEPTANCE_LINES.extend(f"        {n}" for n in self.notes)
            return False

    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
