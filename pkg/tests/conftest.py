from __future__ import annotations

import pytest

from epimem.config import load_config
from epimem.engine import MemoryEngine
from epimem.evalkit.datasets import load_dialogue_dataset
from epimem.fixtures import fixture_path

CAROLINE_QUESTION = "Where did Caroline move from 4 years ago?"
TWOHOP_QUESTION = "In which city does the person who adopted the grey cat live?"


def build_fixture_engine(name: str, **overrides) -> MemoryEngine:
    cfg = load_config(fixture_path(name, "config.toml"))
    for section, changes in overrides.items():
        cfg = cfg.replace(section, **changes)
    engine = MemoryEngine(cfg)
    dataset = load_dialogue_dataset(fixture_path(name, "dialogue.json"))
    for stream_id, stream in dataset.streams.items():
        engine.ingest(stream_id, stream)
    return engine


@pytest.fixture
def caroline_engine() -> MemoryEngine:
    return build_fixture_engine("caroline")


@pytest.fixture
def twohop_engine() -> MemoryEngine:
    return build_fixture_engine("twohop")


_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = getattr(getattr(item, "function", None), "criterion", None)
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        doc = (item.function.__doc__ or "").strip().splitlines()[0]
        status = "PASS" if report.passed else "FAIL"
        if report.skipped:
            status = "SKIP"
        _ACCEPTANCE[number] = (status, doc)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, doc = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {doc}")
