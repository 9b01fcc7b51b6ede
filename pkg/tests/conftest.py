import numpy as np
import pytest

from spinorflow.clifford import build_rep
from spinorflow.lattice import LatticeChart


@pytest.fixture(scope="session")
def rep2():
    return build_rep(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def torus(N, n=2, order=4):
    return LatticeChart.unit_torus(n, N, order)


def conformal_metric(chart, amplitude=0.1):
    x, y = chart.coords()[:2]
    f = amplitude * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    return f, np.exp(2 * f)[..., None, None] * np.eye(chart.n)


def gaussian_curvature(chart, f):
    # K = -e^{-2f} (f_xx + f_yy) for f = a sin(2 pi x) sin(2 pi y)
    return np.exp(-2 * f) * 8 * np.pi**2 * f
