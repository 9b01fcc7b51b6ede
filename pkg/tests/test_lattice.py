import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import conformal_metric, gaussian_curvature, torus
from spinorflow.lattice import (
    DerivativeBudgetError,
    LatticeChart,
    NonPositiveMetricError,
    christoffels,
    convergence_order,
    cov_deriv_tensor,
    frame_from_metric,
    integrate,
    l2_average,
    lie_derivative_metric,
    riemann,
    to_frame,
    from_frame,
    volume,
)


def test_chart_validation():
    with pytest.raises(ValueError):
        LatticeChart((4, 16), 0.1)
    with pytest.raises(ValueError):
        LatticeChart((16, 16), 0.0)
    with pytest.raises(ValueError):
        LatticeChart((16, 16), 0.1, order=3)
    with pytest.raises(ValueError):
        LatticeChart((16,), 0.1)


@pytest.mark.parametrize("order", [2, 4])
def test_derivative_orders(order):
    errs = []
    for N in (16, 32, 64):
        c = torus(N, order=order)
        x, y = c.coords()
        errs.append(np.abs(c.d(np.sin(2 * np.pi * x), 0) - 2 * np.pi * np.cos(2 * np.pi * x)).max())
    assert convergence_order([1 / 16, 1 / 32, 1 / 64], errs) == pytest.approx(order, abs=0.2)


def test_frame_examples(rng):
    c = torus(8)
    assert np.allclose(frame_from_metric(c.identity_metric()), np.eye(2))
    g = np.broadcast_to(np.diag([4.0, 1.0]), (8, 8, 2, 2)).copy()
    e = frame_from_metric(g)
    assert np.allclose(e[..., :, 0], [0.5, 0.0]) and np.allclose(e[..., :, 1], [0.0, 1.0])
    A = rng.normal(size=(8, 8, 3, 3))
    g = A @ np.swapaxes(A, -1, -2) + 0.5 * np.eye(3)
    e, theta = frame_from_metric(g, with_coframe=True)
    assert np.abs(np.swapaxes(e, -1, -2) @ g @ e - np.eye(3)).max() < 1e-12
    assert np.abs(e @ theta - np.eye(3)).max() < 1e-12
    T = rng.normal(size=(8, 8, 3, 3))
    assert np.allclose(from_frame(to_frame(T, e, 2), theta, 2), T)


def test_non_positive_metric_reports_site():
    c = torus(8)
    g = c.identity_metric()
    g[3, 5] = np.diag([1.0, -0.5])
    with pytest.raises(NonPositiveMetricError) as info:
        frame_from_metric(g)
    assert info.value.site == (3, 5)
    assert info.value.eigenvalue == pytest.approx(-0.5)


def test_flat_metric_has_no_curvature():
    c = torus(16)
    g = c.identity_metric()
    assert not christoffels(c, g).any()
    cf = riemann(c, g)
    assert not cf.riemann.any() and not cf.ricci.any()


@pytest.mark.parametrize("order", [2, 4])
def test_conformal_curvature_oracle(order):
    errs, sym, bianchi = [], [], []
    grids = (32, 64, 128)
    for N in grids:
        c = torus(N, order=order)
        f, g = conformal_metric(c)
        cf = riemann(c, g).frame(frame_from_metric(g))
        K = gaussian_curvature(c, f)
        errs.append(max(np.abs(cf.riemann[..., 0, 1, 0, 1] - K).max(), np.abs(cf.ricci[..., 0, 0] - K).max()))
        sym.append(cf.symmetry_residual())
        bianchi.append(cf.bianchi_residual())
    hs = [1 / N for N in grids]
    assert convergence_order(hs, errs) >= order - 0.2
    assert convergence_order(hs, sym) >= order - 0.2
    # the Christoffel construction satisfies the first Bianchi identity identically
    assert max(bianchi) < 1e-9


def test_metric_compatibility_and_product_rule():
    errs, prod = [], []
    for N in (32, 64):
        c = torus(N)
        f, g = conformal_metric(c)
        errs.append(np.abs(cov_deriv_tensor(c, g, g, 2)).max())
        x, y = c.coords()
        s = np.cos(2 * np.pi * x)
        lhs = cov_deriv_tensor(c, g, s[..., None, None] * g, 2)
        rhs = c.grad(s)[..., :, None, None] * g[..., None, :, :]
        prod.append(np.abs(lhs - rhs).max())
    # Christoffels built from the same stencil make this cancel identically
    assert max(errs) < 1e-12
    assert prod[1] < prod[0] / 10


def test_flat_constant_tensor_derivatives_vanish():
    c = torus(16)
    g = c.identity_metric()
    T = np.broadcast_to(np.arange(8.0).reshape(2, 2, 2), (16, 16, 2, 2, 2))
    assert not cov_deriv_tensor(c, g, T, 3, k=4).any()
    with pytest.raises(DerivativeBudgetError):
        cov_deriv_tensor(c, g, T, 3, k=5)


def test_lie_derivative_flat_cases():
    c = torus(32)
    g = c.identity_metric()
    X = np.broadcast_to([0.3, -1.2], (32, 32, 2)).copy()
    assert not lie_derivative_metric(c, g, X).any()
    x, y = c.coords()
    X = np.stack([np.sin(2 * np.pi * y), np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)], -1)
    dX = c.grad(X)  # [a, b] = d_a X_b
    assert np.allclose(lie_derivative_metric(c, g, X), dX + np.swapaxes(dX, -1, -2))


def test_integration_examples():
    for N in (8, 16, 40):
        c = torus(N)
        assert volume(c, c.identity_metric()) == pytest.approx(1.0, abs=1e-12)
    c = torus(64)
    x, _ = c.coords()
    g = c.identity_metric()
    assert integrate(c, g, np.sin(2 * np.pi * x) ** 2) == pytest.approx(0.5, abs=1e-10)
    _, gc = conformal_metric(c)
    assert l2_average(c, gc, np.full(c.dims, 3.5)) == pytest.approx(3.5)
    mask = x < 0.5
    assert l2_average(c, g, np.where(mask, 2.0, 0.0), region=mask) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        l2_average(c, g, x, region=np.zeros(c.dims, bool))


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(0.2, 5.0))
def test_curvature_scales_under_constant_rescaling(scale):
    c = torus(16)
    _, g = conformal_metric(c)
    a = riemann(c, g)
    b = riemann(c, scale**2 * g)
    assert np.allclose(b.riemann, scale**2 * a.riemann, atol=1e-9 * scale**2)
    assert np.allclose(b.ricci, a.ricci, atol=1e-9)
