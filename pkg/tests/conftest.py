import json
from contextlib import contextmanager
from pathlib import Path

import pytest

ORACLE_FILE = Path(__file__).parent / "oracles" / "frozen.json"
_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def oracle():
    return json.loads(ORACLE_FILE.read_text())


@pytest.fixture(scope="session")
def drive():
    from mirrortrap.fields.pseudo import REFERENCE_DRIVE
    return REFERENCE_DRIVE


@pytest.fixture(scope="session")
def example_model():
    from mirrortrap.fields.model import TrapModel
    from mirrortrap.layout import load_example
    return TrapModel(load_example())


@pytest.fixture(scope="session")
def relay():
    from mirrortrap.optics.design import load_relay
    return load_relay()


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the terminal summary."""

    @contextmanager
    def record(number, detail=""):
        info = {"detail": detail}
        try:
            yield info
        except BaseException:
            _ACCEPTANCE[number] = ("FAIL", info["detail"])
            raise
        _ACCEPTANCE[number] = ("PASS", info["detail"])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
