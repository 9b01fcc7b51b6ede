"""Complex Clifford algebra representations and pointwise spinor products.

Generators follow the geometer convention ``e_i e_j + e_j e_i = -2 delta_ij``.
All routines broadcast over leading (site) axes: a spinor field is an array
of shape ``(*sites, dim)`` and a frame vector field ``(*sites, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def _kron_all(mats):
    return reduce(np.kron, mats, np.ones((1, 1), dtype=complex))


def _hermitian_generators(n: int) -> list[np.ndarray]:
    # Jordan-Wigner strings; odd n appends the chirality element.
    m = n // 2
    out = []
    for k in range(m):
        left = [_SZ] * k
        right = [_I2] * (m - k - 1)
        out.append(_kron_all(left + [_SX] + right))
        out.append(_kron_all(left + [_SY] + right))
    if n % 2:
        out.append(_kron_all([_SZ] * m))
    return out


@dataclass(frozen=True)
class CliffordRep:
    """Skew-Hermitian gamma matrices realizing ``Cl_n`` on ``C^(2^(n//2))``."""

    n: int
    gamma: np.ndarray = field(repr=False)
    # gamma_i gamma_j products, shape (n, n, dim, dim)
    pairs: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.gamma.shape[-1]

    def anticommutator_residual(self) -> float:
        eye = np.eye(self.dim)
        worst = 0.0
        for i in range(self.n):
            for j in range(self.n):
                r = self.pairs[i, j] + self.pairs[j, i] + 2.0 * (i == j) * eye
                worst = max(worst, float(np.abs(r).max()))
        return worst


def build_rep(n: int) -> CliffordRep:
    if int(n) != n or n < 2:
        raise ValueError(f"Clifford representation needs integer n >= 2, got {n!r}")
    n = int(n)
    gamma = np.array([1j * G for G in _hermitian_generators(n)])
    gamma.setflags(write=False)
    pairs = np.einsum("iab,jbc->ijac", gamma, gamma)
    pairs.setflags(write=False)
    return CliffordRep(n=n, gamma=gamma, pairs=pairs)


def _check_vec(rep: CliffordRep, v: np.ndarray, name: str = "v") -> None:
    if v.shape[-1] != rep.n:
        raise ValueError(f"{name} has {v.shape[-1]} components, expected n={rep.n}")


def _check_spinor(rep: CliffordRep, phi: np.ndarray) -> None:
    if phi.shape[-1] != rep.dim:
        raise ValueError(f"spinor has {phi.shape[-1]} components, expected dim={rep.dim}")


def clifford_mul(rep: CliffordRep, v, phi) -> np.ndarray:
    """Return ``sum_i v_i gamma_i phi`` for frame coefficients ``v``."""
    v = np.asarray(v, dtype=float)
    phi = np.asarray(phi, dtype=complex)
    _check_vec(rep, v)
    _check_spinor(rep, phi)
    mat = np.einsum("...i,iab->...ab", v, rep.gamma)
    return np.einsum("...ab,...b->...a", mat, phi)


def gamma_apply(rep: CliffordRep, phi) -> np.ndarray:
    """All ``gamma_i phi`` at once; returns shape ``(*sites, n, dim)``."""
    return np.einsum("iab,...b->...ia", rep.gamma, phi)


def wedge_mul(rep: CliffordRep, X, Y, phi) -> np.ndarray:
    """``(X ^ Y) . phi = X.Y.phi + <X, Y> phi`` for frame vectors X, Y."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_vec(rep, X, "X")
    _check_vec(rep, Y, "Y")
    phi = np.asarray(phi, dtype=complex)
    _check_spinor(rep, phi)
    XY = clifford_mul(rep, X, clifford_mul(rep, Y, phi))
    return XY + np.sum(X * Y, axis=-1)[..., None] * phi


def two_form_mul(rep: CliffordRep, a, phi) -> np.ndarray:
    """Apply ``sum_{ij} a_ij (e_i ^ e_j)`` to ``phi``; ``a`` has shape (..., n, n).

    The symmetric part of ``a`` drops out because ``e_i ^ e_i = 0``.
    """
    a = np.asarray(a)
    anti = 0.5 * (a - np.swapaxes(a, -1, -2))
    return np.einsum("...ij,ijab,...b->...a", anti, rep.pairs, phi)


def herm_inner(phi, psi) -> np.ndarray:
    """Hermitian product, conjugate-linear in the first slot; sums the last axis."""
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    if phi.shape[-1] != psi.shape[-1]:
        raise ValueError("spinor dimension mismatch")
    return np.sum(np.conj(phi) * psi, axis=-1)


def real_inner(phi, psi) -> np.ndarray:
    return np.real(herm_inner(phi, psi))


def spin_generator(rep: CliffordRep, a) -> np.ndarray:
    """Spinor action of an infinitesimal frame rotation.

    For a frame ``e(t) = f R(t)`` with ``R^{-1} dR/dt = a`` (antisymmetric),
    spinor components in the two frames are related through the matrix
    ``(1/4) sum_ij a_ji gamma_i gamma_j`` returned here.
    """
    a = np.asarray(a, dtype=float)
    return 0.25 * np.einsum("...ji,ijab->...ab", a, rep.pairs)
