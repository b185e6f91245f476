from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("repo", derandomize=True, database=None, deadline=None)
settings.load_profile("repo")

from htnforge.cli import BUNDLED_CORPUS, discover, load_instance

CRITERIA: dict[int, str] = {}


def corpus_entries():
    """[(domain, problem stem, domain path, problem path)] over the bundled corpus."""
    return [
        (domain, p.stem, dpath, p)
        for domain, dpath, problems in discover(BUNDLED_CORPUS)
        for p in problems
    ]


def load(domain: str, problem: str = "p01"):
    root = Path(BUNDLED_CORPUS) / domain
    return load_instance(root / "domain.hddl", root / f"{problem}.hddl")


@pytest.fixture
def corpus():
    return corpus_entries()


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = "::test_criterion_"
    if marker not in report.nodeid:
        return
    number = int(report.nodeid.split(marker)[1].split("_")[0])
    if CRITERIA.get(number) != "FAIL":
        CRITERIA[number] = "pass" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(f"criterion {number}: {CRITERIA[number]}")
