import json
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from moistfem.mesh import build_vertical_slice  # noqa: E402
from moistfem.spaces import CompatibleSpaces  # noqa: E402

DATA = Path(__file__).parent / "data"

# acceptance criteria outcomes, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "oracle_values.json").read_text())


def make_spaces(nx, nz, Lx=1.0, H=1.0, k=0):
    return CompatibleSpaces(build_vertical_slice(nx, nz, Lx, H), k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True, scope="session")
def _serial_blas():
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    yield
