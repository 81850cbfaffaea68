import pytest


@pytest.fixture
def record(request):
    """Print one acceptance line immediately and keep it for the summary."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(line):
        lines = request.config.__dict__.setdefault("_acceptance_lines", [])
        lines.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
