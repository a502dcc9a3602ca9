import numpy as np
import pytest

from fluxsampling import RegionSpec
from fluxsampling.models import BirthDeathChain


@pytest.fixture(scope="session")
def walk():
    """Biased walk on 0..20 drifting down; A is site 0, B is site 15."""
    return BirthDeathChain.uniform(21, 0.4, 0.6), RegionSpec(1, 15)


def three_well_chain():
    """Walk with a deep middle well at 0 between A (near -16) and B (beyond 8)."""
    x = np.arange(-20, 21)
    U = np.interp(x, [-20, -16, -8, 0, 8, 20], [3, 0, 6, -6, 8, -10])
    return BirthDeathChain.from_potential(U, lo=-20, start=-16), RegionSpec(-15, 15)


@pytest.fixture(scope="session")
def three_well():
    return three_well_chain()


class Synthetic:
    """Model whose steps are i.i.d. draws; ``draw`` maps an array of uniforms to values.

    Used to feed the local-distribution sampler data with a known law.
    """

    name = "synthetic"
    block_steps = 256
    time_per_step = 1.0
    integer_order_parameter = False

    def __init__(self, draw, bin_width=0.01):
        self.draw = draw
        self.bin_width = bin_width

    def initial_state(self):
        return np.zeros(1)

    def copy_state(self, s):
        return s.copy()

    def order_parameter(self, s):
        return float(s[0])

    def draw_noise(self, gen, n):
        return gen.random(n)

    def advance(self, state, noise, lower, upper, trace):
        vals = np.asarray(self.draw(noise), dtype=float)
        out = np.nonzero((vals < lower) | (vals >= upper))[0]
        n = int(out[0]) + 1 if out.size else len(vals)
        trace[:n] = vals[:n]
        state[0] = vals[n - 1]
        return n, bool(out.size)


@pytest.fixture
def synthetic():
    return Synthetic
