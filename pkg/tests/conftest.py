import json
import subprocess
import sys
from pathlib import Path

import pytest

from linxkit import Viewport, parse_snapshot

DATA = Path(__file__).resolve().parent / "data"
DEMOS = DATA / "demos"


@pytest.fixture
def page12_json():
    return json.loads((DATA / "pages" / "page12.json").read_text())


@pytest.fixture
def page12(page12_json):
    return parse_snapshot(page12_json, Viewport(1280, 720))


def run_cli(*args, env=None, cwd=None):
    """Run ``python -m linxkit`` in a subprocess; returns the CompletedProcess."""
    return subprocess.run([sys.executable, "-m", "linxkit", *map(str, args)], capture_output=True, text=True,
                          env=env, cwd=cwd)


@pytest.fixture
def cli():
    return run_cli


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, after the normal summary."""
    rows = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            props = dict(getattr(rep, "user_properties", ()))
            if getattr(rep, "when", None) == "call" and "acceptance" in props:
                rows.append(props["acceptance"])
    if rows:
        terminalreporter.section("acceptance criteria")
        for n, ok, detail in sorted(rows):
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  [{detail}]")
