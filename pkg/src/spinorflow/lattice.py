"""Discrete Riemannian geometry on flat periodic lattices.

Fields are numpy arrays whose leading axes are the lattice sites; tensor
components follow.  Differentiation inserts the new (covariant) index
directly after the site axes, so ``grad(T)[..., a, i, j] = d_a T_ij``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Central first-derivative weights: (shift, weight) pairs, antisymmetric stencil.
_FIRST_DERIVATIVE = {
    2: ((1, 1.0 / 2.0),),
    4: ((1, 2.0 / 3.0), (2, -1.0 / 12.0)),
}

MAX_DERIVATIVE_ORDER = 4
MIN_SITES_PER_AXIS = 8


class NonPositiveMetricError(ValueError):
    """Raised when the metric fails to be positive definite somewhere."""

    def __init__(self, site, eigenvalue):
        self.site = tuple(int(i) for i in site)
        self.eigenvalue = float(eigenvalue)
        super().__init__(
            f"metric not positive definite at site {self.site} "
            f"(smallest eigenvalue {self.eigenvalue:.3e})"
        )


class DerivativeBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeChart:
    """Periodic grid ``dims[0] x ... x dims[n-1]`` with uniform spacing ``h``."""

    dims: tuple[int, ...]
    h: float
    order: int = 4

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 2:
            raise ValueError("lattice dimension must be at least 2")
        if min(self.dims) < MIN_SITES_PER_AXIS:
            raise ValueError(
                f"each axis needs at least {MIN_SITES_PER_AXIS} sites, got {self.dims}"
            )
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        if self.order not in _FIRST_DERIVATIVE:
            raise ValueError(f"stencil order must be one of {sorted(_FIRST_DERIVATIVE)}")

    @classmethod
    def unit_torus(cls, n: int, N: int, order: int = 4) -> "LatticeChart":
        return cls(dims=(N,) * n, h=1.0 / N, order=order)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(d * self.h for d in self.dims)

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def coords(self) -> list[np.ndarray]:
        axes = [np.arange(d) * self.h for d in self.dims]
        return np.meshgrid(*axes, indexing="ij")

    def d(self, f: np.ndarray, axis: int) -> np.ndarray:
        """Central difference along a site axis (periodic)."""
        out = np.zeros(f.shape, dtype=np.result_type(f, float))
        for shift, w in _FIRST_DERIVATIVE[self.order]:
            out += w * (np.roll(f, -shift, axis=axis) - np.roll(f, shift, axis=axis))
        return out / self.h

    def grad(self, f: np.ndarray) -> np.ndarray:
        return np.stack([self.d(f, a) for a in range(self.n)], axis=self.n)

    def identity_metric(self) -> np.ndarray:
        return np.broadcast_to(np.eye(self.n), self.dims + (self.n, self.n)).copy()


# ---------------------------------------------------------------- metric algebra


def check_metric(g: np.ndarray) -> np.ndarray:
    """Return per-site eigenvalues, raising if any site is not positive definite."""
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise ValueError("metric field is not symmetric")
    w = np.linalg.eigvalsh(g)
    lo = w[..., 0]
    if not np.all(np.isfinite(lo)) or lo.min() <= 0:
        bad = np.unravel_index(np.nanargmin(np.where(np.isfinite(lo), lo, -np.inf)), lo.shape)
        raise NonPositiveMetricError(bad, lo[bad])
    return w


def frame_from_metric(g: np.ndarray, with_coframe: bool = False):
    """Orthonormal frame ``e = g^(-1/2)``; columns are the frame vectors.

    ``e[..., a, i]`` is coordinate component ``a`` of ``e_i``.  With
    ``with_coframe`` also returns ``g^(1/2)``, whose row ``i`` is the dual
    coframe ``theta^i``.
    """
    check_metric(g)
    w, Q = np.linalg.eigh(g)
    e = np.einsum("...ak,...k,...bk->...ab", Q, w**-0.5, Q)
    if not with_coframe:
        return e
    theta = np.einsum("...ak,...k,...bk->...ab", Q, w**0.5, Q)
    return e, theta


def inverse_metric(g: np.ndarray) -> np.ndarray:
    return np.linalg.inv(g)


def sqrt_det(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.linalg.det(g))


def to_frame(T: np.ndarray, e: np.ndarray, rank: int) -> np.ndarray:
    """Contract each of the ``rank`` trailing covariant slots with the frame."""
    return _transform_slots(T, e, rank)


def from_frame(T: np.ndarray, theta: np.ndarray, rank: int) -> np.ndarray:
    """Inverse of :func:`to_frame` (frame indices back to covariant coordinate ones)."""
    return _transform_slots(T, np.swapaxes(theta, -1, -2), rank)


def _transform_slots(T, M, rank):
    src = string.ascii_lowercase[:rank]
    dst = string.ascii_uppercase[:rank]
    ops = [f"...{a}{b}" for a, b in zip(src, dst)]
    spec = f"...{src}," + ",".join(ops) + f"->...{dst}"
    return np.einsum(spec, T, *([M] * rank), optimize=True)


# ---------------------------------------------------------------- curvature


def christoffels(chart: LatticeChart, g: np.ndarray) -> np.ndarray:
    """``Gamma[..., c, a, b] = Gamma^c_ab`` of the Levi-Civita connection."""
    dg = chart.grad(g)  # dg[..., c, a, b] = d_c g_ab
    low = 0.5 * (
        np.swapaxes(dg, -3, -2)  # d_a g_cb -> [c, a, b]
        + np.einsum("...bca->...cab", dg)  # d_b g_ca
        - dg
    )
    return np.einsum("...cd,...dab->...cab", inverse_metric(g), low)


@dataclass
class CurvatureField:
    """Riemann tensor with all indices lowered, plus its traces.

    ``riemann[..., a, b, c, d] = g(R(d_c, d_d) d_b, d_a)``, so on a surface
    ``R_1212 = K det g`` with K the Gaussian curvature.
    """

    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray

    def frame(self, e: np.ndarray) -> "CurvatureField":
        rm = to_frame(self.riemann, e, 4)
        ric = to_frame(self.ricci, e, 2)
        return CurvatureField(riemann=rm, ricci=ric, scalar=self.scalar)

    def symmetry_residual(self) -> float:
        R = self.riemann
        r1 = np.abs(R + np.swapaxes(R, -4, -3)).max()
        r2 = np.abs(R + np.swapaxes(R, -2, -1)).max()
        r3 = np.abs(R - np.einsum("...abcd->...cdab", R)).max()
        return float(max(r1, r2, r3))

    def bianchi_residual(self) -> float:
        R = self.riemann
        cyc = R + np.einsum("...abcd->...acdb", R) + np.einsum("...abcd->...adbc", R)
        return float(np.abs(cyc).max())


def riemann(chart: LatticeChart, g: np.ndarray, gamma: np.ndarray | None = None) -> CurvatureField:
    if gamma is None:
        gamma = christoffels(chart, g)
    dG = chart.grad(gamma)  # dG[..., c, a, d, b] = d_c Gamma^a_db
    up = (
        np.einsum("...cadb->...abcd", dG)
        - np.einsum("...dacb->...abcd", dG)
        + np.einsum("...ace,...edb->...abcd", gamma, gamma)
        - np.einsum("...ade,...ecb->...abcd", gamma, gamma)
    )
    rm = np.einsum("...ae,...ebcd->...abcd", g, up)
    ginv = inverse_metric(g)
    ric = np.einsum("...ac,...ajck->...jk", ginv, rm)
    scal = np.einsum("...jk,...jk->...", ginv, ric)
    return CurvatureField(riemann=rm, ricci=ric, scalar=scal)


def cov_deriv_tensor(
    chart: LatticeChart,
    g: np.ndarray,
    T: np.ndarray,
    rank: int,
    k: int = 1,
    gamma: np.ndarray | None = None,
) -> np.ndarray:
    """Iterated Levi-Civita derivative of a covariant tensor field of given rank.

    Each application prepends one covariant index (directly after the sites).
    """
    if k < 0:
        raise ValueError("derivative order must be non-negative")
    if k > MAX_DERIVATIVE_ORDER:
        raise DerivativeBudgetError(
            f"requested {k} derivatives; budget is {MAX_DERIVATIVE_ORDER}"
        )
    if gamma is None:
        gamma = christoffels(chart, g)
    out = T
    r = rank
    for _ in range(k):
        dT = chart.grad(out)
        for slot in range(r):
            dT = dT - _contract_slot(gamma, out, slot, r)
        out = dT
        r += 1
    return out


def _contract_slot(gamma: np.ndarray, T: np.ndarray, slot: int, rank: int) -> np.ndarray:
    # sum_e Gamma^e_{c a_slot} T_{.. e ..}, new index c placed first
    letters = string.ascii_letters
    idx = list(letters[:rank])
    out_idx = ["Z"] + idx
    t_idx = idx.copy()
    t_idx[slot] = "Y"
    spec = f"...YZ{idx[slot]},...{''.join(t_idx)}->...{''.join(out_idx)}"
    return np.einsum(spec, gamma, T)


def lower(g: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...b->...a", g, X)


def lie_derivative_metric(
    chart: LatticeChart, g: np.ndarray, X: np.ndarray, gamma: np.ndarray | None = None
) -> np.ndarray:
    """``(L_X g)_ab = nabla_a X_b + nabla_b X_a`` for a coordinate vector field X."""
    dX = cov_deriv_tensor(chart, g, lower(g, X), rank=1, gamma=gamma)
    return dX + np.swapaxes(dX, -1, -2)


# ---------------------------------------------------------------- integration


def integrate(chart: LatticeChart, g: np.ndarray, f: np.ndarray) -> float:
    return float(np.sum(f * sqrt_det(g)) * chart.cell_volume)


def volume(chart: LatticeChart, g: np.ndarray) -> float:
    return float(np.sum(sqrt_det(g)) * chart.cell_volume)


def l2_average(
    chart: LatticeChart, g: np.ndarray, f: np.ndarray, region: np.ndarray | None = None
) -> float:
    """Volume-normalized integral of ``f`` over ``region`` (boolean mask; all sites if None)."""
    w = sqrt_det(g)
    if region is not None:
        w = np.where(region, w, 0.0)
    total = np.sum(w)
    if total <= 0:
        raise ValueError("averaging region has zero volume")
    return float(np.sum(f * w) / total)


def sq_norm(T: np.ndarray, n_comp_axes: int) -> np.ndarray:
    """Pointwise squared norm of frame-index (orthonormal) components."""
    axes = tuple(range(-n_comp_axes, 0)) if n_comp_axes else ()
    return np.sum(np.abs(T) ** 2, axis=axes) if axes else np.abs(T) ** 2


def convergence_order(hs: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.log(np.asarray(hs, dtype=float))
    er = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(hs, er, 1)[0])
