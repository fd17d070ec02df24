"""Shared fixtures: full demo runs are expensive, so each is simulated once per session."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from safesmc.config import load_demo  # noqa: E402
from safesmc.errors import SafeSMCError  # noqa: E402
from safesmc.sim import run  # noqa: E402

_RUNS: dict = {}

# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def demo_run(name: str, *, safeguard_enabled: bool = True, dt: float | None = None):
    """(config, result or None, error or None, wall seconds), cached per session."""
    key = (name, safeguard_enabled, dt)
    if key not in _RUNS:
        cfg = load_demo(name)
        if dt is not None:
            cfg = cfg.with_value("dt", dt)
        t0 = time.perf_counter()
        try:
            result, error = run(cfg.scenario, cfg.sim, safeguard_enabled=safeguard_enabled), None
        except SafeSMCError as exc:
            result, error = getattr(exc, "result", None), exc
        _RUNS[key] = (cfg, result, error, time.perf_counter() - t0)
    return _RUNS[key]


@pytest.fixture(scope="session")
def s1a():
    cfg, result, error, _ = demo_run("robot-s1a")
    assert error is None
    return result


@pytest.fixture(scope="session")
def baseline():
    cfg, result, error, _ = demo_run("robot-s1a", safeguard_enabled=False)
    assert error is None
    return result


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
