import pytest

from vqexposure import build_grid, standard_buckets

SPOTS = (110.0, 100.0, 90.0)
VOLS = (0.15, 0.25, 0.30)
CASES = [(s, v) for s in SPOTS for v in VOLS]


@pytest.fixture(scope="session")
def buckets():
    return standard_buckets()


@pytest.fixture(scope="session")
def grid_cache():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_grid(n)
        return cache[n]

    return get
