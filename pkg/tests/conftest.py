from __future__ import annotations

import pytest

from annoflow.engine import Instance
from annoflow.protocol import compile_source, parse_protocol

from support import fixture_text


@pytest.fixture(scope="session")
def sentiment_source() -> str:
    return fixture_text("sentiment.ap.json")


@pytest.fixture(scope="session")
def sentiment_machine(sentiment_source):
    return compile_source(sentiment_source)


@pytest.fixture(scope="session")
def loop_source() -> str:
    return fixture_text("review_loop.ap.json")


@pytest.fixture(scope="session")
def loop_machine(loop_source):
    return compile_source(loop_source)


@pytest.fixture(scope="session")
def boxes_source() -> str:
    return fixture_text("ocr_boxes.ap.json")


@pytest.fixture(scope="session")
def boxes_machine(boxes_source):
    return compile_source(boxes_source)


@pytest.fixture(scope="session")
def sentiment_protocol(sentiment_source):
    return parse_protocol(sentiment_source)


@pytest.fixture()
def text_instance() -> Instance:
    return Instance(id=1, kind="text",
                    content="I completely disagree with this decision.",
                    context="Thread: council approves the new bike lanes",
                    meta='{"post_id": 102}')


@pytest.fixture()
def file_instance() -> Instance:
    return Instance(id=2, kind="file",
                    content=("pages/doc7_p1.png", "pages/doc7_p2.png"),
                    meta='{"doc_id": 7}')


# Acceptance summary: one line per criterion, printed after the run.
_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_acceptance(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else (
        "SKIP" if report.skipped else "FAIL")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid:
        record_acceptance(report)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{outcome}  {name}")
