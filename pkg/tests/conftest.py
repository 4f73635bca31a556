import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from optipairs import ModelParams, PiecewiseValue, solve_policy  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def policy(params):
    return solve_policy(params)


@pytest.fixture(scope="session")
def pv(policy):
    return PiecewiseValue(policy)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


# criterion -> list of (ok, detail); filled by tests/test_acceptance.py
_ACCEPTANCE: dict[str, list] = {}


@pytest.fixture(scope="session")
def record():
    def _record(criterion: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE, key=lambda c: int(c.split()[0])):
        entries = _ACCEPTANCE[crit]
        bad = [d for ok, d in entries if not ok]
        status = "PASS" if not bad else "FAIL"
        summary = f"{len(entries) - len(bad)}/{len(entries)} checks"
        tr.write_line(f"criterion {crit}: {status} ({summary})")
        for d in bad:
            tr.write_line(f"    failed: {d}")
