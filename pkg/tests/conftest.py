import sys
from pathlib import Path

import pytest

from starkmbl.basis import build_sector_basis
from starkmbl.model import PotentialProfile, triangular_ladder

sys.path.insert(0, str(Path(__file__).parent))  # expose oracles.py to test modules


@pytest.fixture(scope="session")
def ladder12():
    return triangular_ladder(12)


@pytest.fixture(scope="session")
def basis12():
    return build_sector_basis(12, 6)


@pytest.fixture(scope="session")
def stark12():
    return PotentialProfile.stark(12, 2.0)
