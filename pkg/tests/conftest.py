import numpy as np
import pytest

from fredholm_backstepping.gains import PotentialSpec, assemble_transform, solve_gain_profile
from fredholm_backstepping.spectral import EVEN, ODD

LAM = 6.0


class Setup:
    """Gains and transforms for a == 1 with 2N stored potential rows."""

    def __init__(self, n_max: int, lam: float = LAM):
        self.n_max = n_max
        self.lam = lam
        self.potentials = PotentialSpec.constant(2 * n_max)
        self.gains = solve_gain_profile(lam, self.potentials, n_max)
        self.t_odd = assemble_transform(self.gains, self.potentials, ODD)
        self.t_even = assemble_transform(self.gains, self.potentials, EVEN)

    @property
    def transforms(self):
        return self.t_odd, self.t_even

    def transform(self, parity):
        return self.t_odd if parity == ODD else self.t_even


_cache: dict[tuple[int, float], Setup] = {}


def setup_for(n_max: int, lam: float = LAM) -> Setup:
    key = (n_max, lam)
    if key not in _cache:
        _cache[key] = Setup(n_max, lam)
    return _cache[key]


@pytest.fixture
def small():
    return setup_for(32)


@pytest.fixture
def medium():
    return setup_for(128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
