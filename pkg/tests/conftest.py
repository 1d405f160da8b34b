import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import InProcessExecutor, golden_arrangement  # noqa: E402


@pytest.fixture
def arrangement():
    return golden_arrangement()


@pytest.fixture
def executor():
    return InProcessExecutor()


@pytest.fixture
def library(tmp_path):
    from scenemotif.programs import ProgramLibrary

    return ProgramLibrary(tmp_path / "library")
