import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
DATA = HERE / "data"
HAND = DATA / "hand"

sys.path.insert(0, str(HERE))


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def hand_dir():
    return HAND
