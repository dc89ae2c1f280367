import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from provrepro import FileRef, Workspace, wordcount_workflow  # noqa: E402

CORPUS = (
    b"A lighthouse keeper kept a log of every ship that passed the point,\n"
    b"noting the hour, the weather and the colour of its sails. Years later\n"
    b"the pages were used to check old harbour records, and where the two\n"
    b"disagreed the keeper's careful hand was usually the one believed.\n"
)
CORPUS_REF = FileRef("wfinput", "corpus")
WORDCOUNT_FILES = ["wordlist1", "wordlist2", "analysis1", "analysis2", "merge_output"]


@pytest.fixture
def home(tmp_path, monkeypatch):
    h = tmp_path / "home"
    monkeypatch.setenv("PROVREPRO_HOME", str(h))
    return h


@pytest.fixture
def ws(home):
    return Workspace(home)


@pytest.fixture
def wordcount_run(ws):
    return ws.run(wordcount_workflow(), nodes=2, flavor="m1.small", inputs={CORPUS_REF: CORPUS})


_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
