import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinorflow.clifford import (
    build_rep,
    clifford_mul,
    gamma_apply,
    herm_inner,
    real_inner,
    spin_generator,
    two_form_mul,
    wedge_mul,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("n, dim", [(2, 2), (3, 2), (4, 4), (5, 4), (6, 8), (7, 8)])
def test_spinor_dimension(n, dim):
    assert build_rep(n).dim == dim


@pytest.mark.parametrize("n", range(2, 8))
def test_anticommutation_and_skew_unitary(n):
    rep = build_rep(n)
    assert rep.anticommutator_residual() <= 1e-14
    eye = np.eye(rep.dim)
    for G in rep.gamma:
        assert np.abs(G + G.conj().T).max() <= 1e-14
        assert np.abs(G.conj().T @ G - eye).max() <= 1e-14
        assert np.allclose(G @ G, -eye, atol=1e-14)


@pytest.mark.parametrize("n", [0, 1, -3, 2.5])
def test_rejects_bad_dimension(n):
    with pytest.raises(ValueError):
        build_rep(n)


def test_gamma_is_read_only():
    rep = build_rep(3)
    with pytest.raises(ValueError):
        rep.gamma[0, 0, 0] = 1.0


def _spinor(data, dim):
    re = data.draw(arrays(float, dim, elements=finite))
    im = data.draw(arrays(float, dim, elements=finite))
    return re + 1j * im


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 6), data=st.data())
def test_unit_vector_multiplication_is_isometry(n, data):
    rep = build_rep(n)
    v = data.draw(arrays(float, n, elements=finite))
    if np.linalg.norm(v) < 1e-3:
        v = np.eye(n)[0]
    v = v / np.linalg.norm(v)
    phi, psi = _spinor(data, rep.dim), _spinor(data, rep.dim)
    lhs = herm_inner(clifford_mul(rep, v, phi), clifford_mul(rep, v, psi))
    scale = 1 + np.linalg.norm(phi) * np.linalg.norm(psi)
    assert abs(lhs - herm_inner(phi, psi)) <= 1e-14 * scale


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 6), data=st.data())
def test_wedge_is_antisymmetric(n, data):
    rep = build_rep(n)
    X = data.draw(arrays(float, n, elements=finite))
    Y = data.draw(arrays(float, n, elements=finite))
    phi = _spinor(data, rep.dim)
    scale = 1 + np.linalg.norm(X) * np.linalg.norm(Y) * np.linalg.norm(phi)
    assert np.abs(wedge_mul(rep, X, Y, phi) + wedge_mul(rep, Y, X, phi)).max() <= 1e-14 * scale


def test_clifford_examples(rng):
    rep = build_rep(3)
    phi = rng.normal(size=2) + 1j * rng.normal(size=2)
    e1 = np.array([1.0, 0, 0])
    assert np.allclose(clifford_mul(rep, e1, clifford_mul(rep, e1, phi)), -phi)
    assert np.allclose(clifford_mul(rep, np.zeros(3), phi), 0)
    assert np.isclose(np.linalg.norm(clifford_mul(rep, e1, phi)), np.linalg.norm(phi))
    assert np.allclose(wedge_mul(rep, e1, e1, phi), 0)
    e2 = np.array([0, 1.0, 0])
    assert np.allclose(wedge_mul(rep, e1, e2, phi), rep.gamma[0] @ rep.gamma[1] @ phi)


def test_dimension_mismatch_errors():
    rep = build_rep(2)
    with pytest.raises(ValueError):
        clifford_mul(rep, np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        clifford_mul(rep, np.ones(2), np.ones(4))
    with pytest.raises(ValueError):
        herm_inner(np.ones(2), np.ones(3))


def test_inner_products(rng):
    phi = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
    assert np.allclose(real_inner(phi, phi), np.sum(np.abs(phi) ** 2, axis=-1))
    psi = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
    assert np.allclose(herm_inner(phi, 2j * psi), 2j * herm_inner(phi, psi))
    assert np.allclose(herm_inner(phi, psi), np.conj(herm_inner(psi, phi)))


def test_field_broadcasting(rng):
    rep = build_rep(2)
    phi = rng.normal(size=(4, 4, 2)) + 0j
    v = rng.normal(size=(4, 4, 2))
    out = clifford_mul(rep, v, phi)
    assert out.shape == (4, 4, 2)
    G = gamma_apply(rep, phi)
    assert np.allclose(out, v[..., 0, None] * G[..., 0, :] + v[..., 1, None] * G[..., 1, :])


def test_two_form_matches_wedge(rng):
    rep = build_rep(4)
    X, Y = rng.normal(size=4), rng.normal(size=4)
    phi = rng.normal(size=4) + 1j * rng.normal(size=4)
    # X ^ Y as the antisymmetric matrix (X_i Y_j - X_j Y_i)/2 summed over all i, j
    a = 0.5 * (np.outer(X, Y) - np.outer(Y, X))
    assert np.allclose(two_form_mul(rep, a, phi), wedge_mul(rep, X, Y, phi))


def test_spin_generator_lifts_rotations(rng):
    # d/dt of gamma_i conjugated by the lift equals the rotated generator
    rep = build_rep(3)
    a = rng.normal(size=(3, 3))
    a = a - a.T
    S = spin_generator(rep, a)
    assert np.abs(S + S.conj().T).max() < 1e-14
    comm = np.einsum("ab,ibc->iac", S, rep.gamma) - np.einsum("iab,bc->iac", rep.gamma, S)
    # [S, gamma_i] = -sum_j a_ij gamma_j  (frame e R with R^{-1} dR = a)
    expected = -np.einsum("ij,jab->iab", a, rep.gamma)
    assert np.allclose(comm, expected)
