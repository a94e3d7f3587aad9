import numpy as np
import pytest


class FixedCoins:
    """Stand-in generator that hands out predetermined uniforms."""

    def __init__(self, *rows):
        self.rows = [np.asarray(r, dtype=float) for r in rows]
        self.k = 0

    def random(self, size=None):
        row = self.rows[min(self.k, len(self.rows) - 1)]
        self.k += 1
        assert size is None or size == row.size
        return row.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
