import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _synthlang import SyntheticLanguage


@pytest.fixture(scope="session")
def language():
    return SyntheticLanguage()


@pytest.fixture(scope="session")
def small_corpus(language):
    """~20K tokens for fast unit tests."""
    return language.corpus(20_000, seed=7)


@pytest.fixture(scope="session")
def small_heldout(language):
    return language.corpus(5_000, seed=8)
