"""Spinor covariant calculus over a lattice metric and its g^(-1/2) frame.

Spinor fields are stored as components relative to the orthonormal frame
returned by :func:`spinorflow.lattice.frame_from_metric`.  Every frame-index
tensor produced here (``nabla phi``, ``nabla^2 phi``, curvature, ...) uses
orthonormal frame indices, so pointwise norms are plain sums of squares.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from .clifford import CliffordRep, real_inner
from .lattice import (
    CurvatureField,
    DerivativeBudgetError,
    LatticeChart,
    MAX_DERIVATIVE_ORDER,
    christoffels,
    frame_from_metric,
    riemann,
)

UNIT_NORM_TOL = 1e-10


class NonUnitSpinorError(ValueError):
    pass


@dataclass
class SpinConnection:
    """Levi-Civita data of ``g`` expressed in the frame ``e``.

    ``omega[..., k, i, j] = g(nabla_{e_k} e_i, e_j)`` and
    ``Omega[..., k] = (1/4) sum_ij omega_kij gamma_i gamma_j``.
    """

    chart: LatticeChart
    rep: CliffordRep
    g: np.ndarray
    e: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray  # Christoffel symbols Gamma^c_ab
    omega: np.ndarray
    Omega: np.ndarray
    _curvature: CurvatureField | None = field(default=None, repr=False)
    # max |omega_kij + omega_kji| before antisymmetrization
    omega_sym_residual: float = 0.0

    @property
    def n(self) -> int:
        return self.chart.n

    def curvature(self) -> CurvatureField:
        """Christoffel-pipeline curvature in frame indices (cached)."""
        if self._curvature is None:
            self._curvature = riemann(self.chart, self.g, self.gamma).frame(self.e)
        return self._curvature

    def skew_residual(self) -> float:
        """Largest deviation of ``Omega_k`` from skew-Hermitian, relative to its size."""
        O = self.Omega
        res = np.abs(O + np.conj(np.swapaxes(O, -1, -2))).max()
        return float(res / max(np.abs(O).max(), 1e-300))


def spin_connection(
    chart: LatticeChart, g: np.ndarray, rep: CliffordRep, e: np.ndarray | None = None
) -> SpinConnection:
    if rep.n != chart.n:
        raise ValueError(f"Clifford rep is for n={rep.n}, lattice has n={chart.n}")
    if e is None:
        e, theta = frame_from_metric(g, with_coframe=True)
    else:
        theta = np.linalg.inv(e)
    gam = christoffels(chart, g)
    de = chart.grad(e)  # de[..., a, c, i] = d_a e_i^c
    nab_e = de + np.einsum("...cab,...bi->...aci", gam, e)
    # theta^j_c (nabla_a e_i)^c then contract a with e_k
    raw = np.einsum("...jc,...ak,...aci->...kij", theta, e, nab_e, optimize=True)
    # the symmetric part in (i, j) is pure truncation error; drop it so the
    # connection is exactly metric (Omega exactly skew-Hermitian)
    omega = 0.5 * (raw - np.swapaxes(raw, -1, -2))
    Omega = 0.25 * np.einsum("...kij,ijst->...kst", omega, rep.pairs)
    conn = SpinConnection(chart, rep, g, e, theta, gam, omega, Omega)
    conn.omega_sym_residual = float(np.abs(raw + np.swapaxes(raw, -1, -2)).max())
    return conn


def frame_derivative(conn: SpinConnection, T: np.ndarray) -> np.ndarray:
    """Directional derivatives ``e_j(T)`` of a field; new index first."""
    dT = conn.chart.grad(T)
    n = conn.n
    lead = dT.ndim - n - 1  # number of component axes after the derivative index
    comp = string.ascii_lowercase[:lead]
    return np.einsum(f"...A{comp},...AJ->...J{comp}", dT, conn.e, optimize=True)


def frame_cov_deriv(conn: SpinConnection, T: np.ndarray, rank: int, spinor: bool) -> np.ndarray:
    """Covariant derivative of a field with ``rank`` frame indices (+ spinor index).

    ``(nabla_j T)_{k...} = e_j(T_{k...}) - sum_slots omega_{j k l} T_{..l..}
    (+ Omega_j T when spinor-valued)``.
    """
    out = frame_derivative(conn, T)
    letters = string.ascii_lowercase
    idx = list(letters[:rank])
    tail = "S" if spinor else ""
    for slot in range(rank):
        t_idx = idx.copy()
        t_idx[slot] = "L"
        spec = f"...J{idx[slot]}L,...{''.join(t_idx)}{tail}->...J{''.join(idx)}{tail}"
        out = out - np.einsum(spec, conn.omega, T)
    if spinor:
        spec = f"...JST,...{''.join(idx)}T->...J{''.join(idx)}S"
        out = out + np.einsum(spec, conn.Omega, T)
    return out


def check_unit(phi: np.ndarray, tol: float = UNIT_NORM_TOL) -> None:
    dev = np.abs(np.sum(np.abs(phi) ** 2, axis=-1) - 1.0).max()
    if dev > tol:
        raise NonUnitSpinorError(f"spinor field deviates from unit norm by {dev:.3e}")


def cov_deriv(phi: np.ndarray, conn: SpinConnection) -> np.ndarray:
    """``nabla_k phi``; returns shape ``(*sites, n, dim)``."""
    return frame_cov_deriv(conn, phi, 0, True)


def iterated_cov_deriv(phi: np.ndarray, conn: SpinConnection, k: int) -> list[np.ndarray]:
    """``[phi, nabla phi, ..., nabla^k phi]``; the first index is the outermost derivative."""
    if k > MAX_DERIVATIVE_ORDER:
        raise DerivativeBudgetError(f"requested {k} derivatives; budget is {MAX_DERIVATIVE_ORDER}")
    out = [phi]
    for r in range(k):
        out.append(frame_cov_deriv(conn, out[-1], r, True))
    return out


def second_cov_deriv(phi: np.ndarray, conn: SpinConnection, dphi: np.ndarray | None = None) -> np.ndarray:
    """``nabla^2_{j,k} phi = nabla_j nabla_k phi - nabla_{nabla_j e_k} phi``."""
    if dphi is None:
        dphi = cov_deriv(phi, conn)
    return frame_cov_deriv(conn, dphi, 1, True)


def laplacian(phi: np.ndarray, conn: SpinConnection, hess: np.ndarray | None = None) -> np.ndarray:
    """Connection Laplacian (trace of the second covariant derivative)."""
    if hess is None:
        hess = second_cov_deriv(phi, conn)
    return np.einsum("...kks->...s", hess)


def dirac(phi: np.ndarray, conn: SpinConnection, dphi: np.ndarray | None = None) -> np.ndarray:
    if dphi is None:
        dphi = cov_deriv(phi, conn)
    return np.einsum("iab,...ib->...a", conn.rep.gamma, dphi)


def spinor_curvature(phi: np.ndarray, conn: SpinConnection, hess: np.ndarray | None = None):
    """``R(e_i, e_j) phi`` two ways: (commutator of nabla^2, closed form from Rm)."""
    if hess is None:
        hess = second_cov_deriv(phi, conn)
    commutator = hess - np.swapaxes(hess, -3, -2)
    Rm = conn.curvature().riemann
    # (1/4) R_ijkl e_l e_k phi
    closed = 0.25 * np.einsum("...ijkl,lkst,...t->...ijs", Rm, conn.rep.pairs, phi, optimize=True)
    return commutator, closed


def ricci_from_spinor(phi: np.ndarray, conn: SpinConnection, hess: np.ndarray | None = None) -> np.ndarray:
    """Frame Ricci tensor ``R_jk = -2 <e_i . R(e_j, e_i) phi, e_k . phi>`` for unit phi."""
    check_unit(phi)
    if hess is None:
        hess = second_cov_deriv(phi, conn)
    curv = hess - np.swapaxes(hess, -3, -2)  # curv[..., j, i] = R(e_j, e_i) phi
    g = conn.rep.gamma
    left = np.einsum("iab,...jib->...ja", g, curv)  # sum_i e_i . R(e_j, e_i) phi
    right = np.einsum("kab,...b->...ka", g, phi)  # e_k . phi
    return -2.0 * real_inner(left[..., :, None, :], right[..., None, :, :])
