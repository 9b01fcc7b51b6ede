"""Initial (metric, spinor) pairs on the unit torus.

Every family is defined by continuum formulas (finite Fourier sums), so the
same configuration sampled on different grids describes the same data.
"""
from __future__ import annotations

import itertools

import numpy as np

from .clifford import CliffordRep
from .flow import FlowState
from .lattice import LatticeChart

FAMILIES = ("parallel", "plane_wave", "conformal_bump", "metric_mode", "random_seeded")


def base_spinor(rep: CliffordRep) -> np.ndarray:
    c = np.zeros(rep.dim, dtype=complex)
    c[0] = 1.0
    return c


def parallel(chart: LatticeChart, rep: CliffordRep) -> FlowState:
    """Flat metric with a constant unit spinor: a critical point of the energy."""
    phi = np.broadcast_to(base_spinor(rep), chart.dims + (rep.dim,)).copy()
    return FlowState(chart, rep, chart.identity_metric(), phi)


def plane_wave(chart: LatticeChart, rep: CliffordRep, xi) -> FlowState:
    """Flat metric, ``phi = exp(2 pi i xi.x) phi0``; then ``|nabla phi|^2 = 4 pi^2 |xi|^2``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (chart.n,):
        raise ValueError(f"wave vector needs {chart.n} components")
    phase = sum(k * x for k, x in zip(xi, chart.coords()))
    phi = np.exp(2j * np.pi * phase)[..., None] * base_spinor(rep)
    return FlowState(chart, rep, chart.identity_metric(), phi)


def conformal_factor_bump(chart: LatticeChart, amplitude: float, frequency: int = 1) -> np.ndarray:
    """``f = amplitude * prod_a sin(2 pi frequency x_a)``."""
    f = np.ones(chart.dims)
    for x in chart.coords():
        f = f * np.sin(2 * np.pi * frequency * x)
    return amplitude * f


def conformal_bump(chart: LatticeChart, rep: CliffordRep, amplitude: float, frequency: int = 1) -> FlowState:
    """``g = exp(2f) delta`` with :func:`conformal_factor_bump`, constant spinor."""
    f = conformal_factor_bump(chart, amplitude, frequency)
    g = np.exp(2 * f)[..., None, None] * np.eye(chart.n)
    phi = np.broadcast_to(base_spinor(rep), chart.dims + (rep.dim,)).copy()
    return FlowState(chart, rep, g, phi)


def metric_mode(chart: LatticeChart, rep: CliffordRep, amplitude: float, xi) -> FlowState:
    """Single Fourier mode ``g = (1 + amplitude cos(2 pi xi.x)) delta``, constant spinor."""
    xi = np.asarray(xi, dtype=float)
    phase = sum(k * x for k, x in zip(xi, chart.coords()))
    g = (1.0 + amplitude * np.cos(2 * np.pi * phase))[..., None, None] * np.eye(chart.n)
    phi = np.broadcast_to(base_spinor(rep), chart.dims + (rep.dim,)).copy()
    return FlowState(chart, rep, g, phi)


class FourierField:
    """Random real trigonometric polynomial with modes ``0 < |k|_inf <= modes``.

    Coefficients decay like ``|k|^-smoothness`` and are scaled so that the
    sum of their magnitudes, a bound for the sup norm, equals ``amplitude``.
    """

    def __init__(self, n: int, rng: np.random.Generator, amplitude: float, modes: int, smoothness: float):
        ks = [k for k in itertools.product(range(-modes, modes + 1), repeat=n) if any(k)]
        self.k = np.array(ks, dtype=float)
        decay = np.linalg.norm(self.k, axis=1) ** (-smoothness)
        a = rng.normal(size=len(ks)) * decay
        total = np.abs(a).sum()
        self.a = amplitude * a / total if total > 0 else a
        self.shift = rng.uniform(0.0, 2 * np.pi, size=len(ks))

    def sample(self, chart: LatticeChart) -> np.ndarray:
        X = np.stack(chart.coords(), axis=-1)
        out = np.zeros(chart.dims)
        for k, a, s in zip(self.k, self.a, self.shift):
            out += a * np.cos(2 * np.pi * (X @ k) + s)
        return out


def random_seeded(
    chart: LatticeChart,
    rep: CliffordRep,
    amplitude: float,
    seed: int,
    smoothness: float = 2.0,
    modes: int = 3,
    spinor_amplitude: float | None = None,
) -> FlowState:
    """Random smooth perturbation of the parallel pair.

    ``g = delta + S`` with ``S`` a symmetric matrix of Fourier fields (sup of
    each entry at most ``amplitude``) and ``phi`` the normalization of
    ``phi0 + (u + i v)`` componentwise.
    """
    n = chart.n
    if n * amplitude >= 1.0:
        raise ValueError("metric amplitude too large to guarantee a positive definite metric")
    spinor_amplitude = amplitude if spinor_amplitude is None else spinor_amplitude
    rng = np.random.default_rng(seed)

    def field():
        return FourierField(n, rng, amplitude, modes, smoothness).sample(chart)

    g = chart.identity_metric()
    for a in range(n):
        for b in range(a, n):
            s = field()
            g[..., a, b] += s
            if a != b:
                g[..., b, a] += s
    phi = np.broadcast_to(base_spinor(rep), chart.dims + (rep.dim,)).astype(complex)
    for s in range(rep.dim):
        re = FourierField(n, rng, spinor_amplitude, modes, smoothness).sample(chart)
        im = FourierField(n, rng, spinor_amplitude, modes, smoothness).sample(chart)
        phi[..., s] += re + 1j * im
    phi = phi / np.linalg.norm(phi, axis=-1, keepdims=True)
    return FlowState(chart, rep, g, phi)


def build(family: str, chart: LatticeChart, rep: CliffordRep, **params) -> FlowState:
    if family == "parallel":
        return parallel(chart, rep)
    if family == "plane_wave":
        return plane_wave(chart, rep, params["xi"])
    if family == "conformal_bump":
        return conformal_bump(chart, rep, params["amplitude"], int(params.get("frequency", 1)))
    if family == "metric_mode":
        return metric_mode(chart, rep, params["amplitude"], params["xi"])
    if family == "random_seeded":
        return random_seeded(
            chart,
            rep,
            params["amplitude"],
            int(params["seed"]),
            params.get("smoothness", 2.0),
            int(params.get("modes", 3)),
            params.get("spinor_amplitude"),
        )
    raise ValueError(f"unknown initial-data family {family!r}; expected one of {FAMILIES}")
