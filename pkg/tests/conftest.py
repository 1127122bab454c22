import math

import numpy as np
import pytest

from ghztomo.fock import MixedEnsemble, ModeLayout, PureKet
from ghztomo.source import SIGNAL_LAYOUT

TWO_MODE = ModeLayout(("a_o", "a_e"), (("a_o", "a_e"),))


def random_signal_ket(rng, max_terms=4):
    """Random normalized ket on the signal modes with at most one photon per mode."""
    n_terms = rng.integers(1, max_terms + 1)
    amps = {}
    for _ in range(n_terms):
        occ = tuple(int(v) for v in rng.integers(0, 2, size=6))
        amps[occ] = complex(rng.normal(), rng.normal())
    return PureKet(SIGNAL_LAYOUT, amps).normalized()


def random_signal_ensemble(rng, max_components=3):
    k = rng.integers(1, max_components + 1)
    w = rng.random(k)
    w /= w.sum()
    return MixedEnsemble(tuple((float(wi), random_signal_ket(rng)) for wi in w))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_mode_states():
    r = 1 / math.sqrt(2)
    return {
        "00": PureKet(TWO_MODE, {(0, 0): 1}),
        "10": PureKet(TWO_MODE, {(1, 0): 1}),
        "10+01": PureKet(TWO_MODE, {(1, 0): r, (0, 1): r}),
        "10+i01": PureKet(TWO_MODE, {(1, 0): r, (0, 1): 1j * r}),
    }
