import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import tiny3 as _tiny3  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def tiny3():
    return _tiny3()


@pytest.fixture
def tiny3_path():
    return DATA / "tiny3.json"
