"""Shared test configuration.

Registers a deterministic hypothesis profile and prints a one-line
verdict per acceptance test at the end of the run.
"""
import os
import sys

from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("suite", deadline=None, max_examples=60,
                          derandomize=True)
settings.load_profile("suite")

_ACCEPTANCE_FILE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if _ACCEPTANCE_FILE not in nodeid or "::" not in nodeid:
                continue
            if getattr(rep, "when", "call") not in ("call", "collect", None):
                # keep setup/teardown noise out, but a setup error still counts
                if outcome not in ("failed", "error", "skipped"):
                    continue
            name = nodeid.split("::")[-1]
            label = name[5:] if name.startswith("test_") else name
            verdict = {"passed": "PASSED", "failed": "FAILED",
                       "error": "FAILED", "skipped": "SKIPPED"}[outcome]
            # a late failure overrides an earlier pass record, never vice versa
            if lines.get(label) != "FAILED":
                lines[label] = verdict
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for label in sorted(lines):
            terminalreporter.write_line(f"  {label}: {lines[label]}")
