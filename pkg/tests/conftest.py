import json
import subprocess
import sys

import pytest


def run_cli(*args, cwd=None):
    """Run the command-line entry point in a fresh interpreter."""
    return subprocess.run(
        [sys.executable, "-m", "rkhscal", *map(str, args)], capture_output=True, text=True, cwd=cwd
    )


@pytest.fixture(scope="session")
def default_study(tmp_path_factory):
    """`study-sec4` with every default, run once per session; returns (out_dir, report dict)."""
    out = tmp_path_factory.mktemp("study_default")
    proc = run_cli("study-sec4", "--out", out)
    assert proc.returncode == 0, proc.stderr
    return out, json.loads((out / "report.json").read_text())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
