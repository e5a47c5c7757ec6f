import numpy as np
import pytest

from vkcorr.fields import GridSpec


@pytest.fixture
def spec2(request) -> GridSpec:
    """Default d=2 grid: unit box with generous margin, 129 points."""
    return GridSpec.for_domain((0.0, 0.0), (1.0, 1.0), 129, margin=0.35)


@pytest.fixture
def fine2() -> GridSpec:
    return GridSpec.for_domain((0.0, 0.0), (1.0, 1.0), 257, margin=0.35)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260808)


def trig_scalar(seed: int, scale: float = 1.0, freq: float = 2.0):
    """A fixed smooth 'random' scalar function for reproducible field tests."""
    g = np.random.default_rng(seed)
    amps = g.normal(size=3) * scale / 3.0
    phases = g.uniform(0, 2 * np.pi, size=3)
    ks = g.uniform(0.5, 1.0, size=(3, 4)) * freq

    def fn(*coords):
        out = np.zeros_like(coords[0])
        for a, p, k in zip(amps, phases, ks):
            arg = sum(kj * c for kj, c in zip(k, coords))
            out = out + a * np.sin(arg + p)
        return out

    return fn
