import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qlsearch.lineshape import LineshapeCache  # noqa: E402
from qlsearch.params import PhysicalParams  # noqa: E402


@pytest.fixture(scope="session")
def cache_root(tmp_path_factory):
    return tmp_path_factory.mktemp("lineshape-cache")


@pytest.fixture(scope="session")
def cache(cache_root):
    return LineshapeCache(cache_root)


@pytest.fixture(scope="session")
def small_params():
    """Reference parameters on a reduced Fock space for fast tests."""
    return PhysicalParams(fock_cutoff=12)


@pytest.fixture(autouse=True)
def _isolated_cache_env(monkeypatch, cache_root):
    monkeypatch.setenv("QLSEARCH_CACHE_DIR", str(cache_root))
