import dataclasses
import json
import os
from pathlib import Path

import pytest

_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def criterion():
    """``criterion(k, title, ok, detail)`` prints and records one verdict line."""
    def record(k: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _LINES.append(line)
        print(line)
        return ok
    return record


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """Run a preset once per session and return ``(report, output_dir)``.

    Set ``GKPSIM_RUN_DIR`` to keep the outputs somewhere permanent.
    """
    from gkpsim.presets import get_preset, preset_fit_block
    from gkpsim.runner import run

    keep = os.environ.get("GKPSIM_RUN_DIR")
    cache: dict = {}

    def go(name: str, factor: int):
        key = (name, factor)
        if key not in cache:
            base = Path(keep) if keep else tmp_path_factory.mktemp("runs")
            out = base / f"{name}-s{factor}"
            preset = get_preset(name, factor)
            cfg = dataclasses.replace(preset.config, fit=preset_fit_block(preset))
            run(cfg, out, preset=preset, threads=1, deterministic=False)
            cache[key] = (json.loads((out / "report.json").read_text()), out)
        return cache[key]
    return go
