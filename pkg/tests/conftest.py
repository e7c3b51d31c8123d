from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scenofuzz.lanemap import load_bundled_map


@pytest.fixture(scope="session")
def chain_map():
    return load_bundled_map("chain_3")


@pytest.fixture(scope="session")
def diamond_map():
    return load_bundled_map("diamond")


@pytest.fixture(scope="session")
def junction_map():
    return load_bundled_map("borregas_ave_lite")
