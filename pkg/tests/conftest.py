from importlib import resources

import pytest

from varjet import dsl

ACCEPTANCE_LINES: list = []


def corpus_path(name: str) -> str:
    return str(resources.files("varjet") / "corpus" / f"{name}.vj")


def load(name: str):
    with open(corpus_path(name), encoding="utf-8") as fh:
        return dsl.parse_problem(fh.read(), name)


@pytest.fixture
def corpus():
    return load


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
