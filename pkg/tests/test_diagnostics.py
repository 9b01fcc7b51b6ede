import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import conformal_metric, torus
from spinorflow import diagnostics as dg
from spinorflow import initial_data as ini
from spinorflow.clifford import build_rep
from spinorflow.flow import FlowState, rhs_modified_flow, step
from spinorflow.lattice import DerivativeBudgetError


@pytest.fixture(scope="module")
def rough_state():
    return ini.random_seeded(torus(24), build_rep(2), 0.15, seed=4, smoothness=1.5, modes=3)


def test_parallel_record_is_trivial(rep2):
    r = dg.compute_record(ini.parallel(torus(16), rep2))
    assert r.E == 0 and r.sup_grad_phi_sq == 0 and r.sup_hess_phi == 0 and r.sup_rm == 0
    assert r.f == [0.0] * (dg.K_MAX + 1) and r.l2avg_rm == [0.0] * (dg.K_MAX + 1)
    assert r.vol == pytest.approx(1.0) and r.min_eig == 1.0 and r.sup_metric_rate == 0
    assert len(r.row()) == len(dg.CSV_COLUMNS)
    assert set(dg.CSV_COLUMNS) <= set(r.to_dict()) | {f"{p}_{i}" for p in ("l2avg_rm", "l2avg_phi", "f") for i in range(3)}


def test_plane_wave_record(rep2):
    r = dg.compute_record(ini.plane_wave(torus(64), rep2, (1, 0)))
    assert r.sup_grad_phi_sq == pytest.approx(4 * np.pi**2, rel=1e-3)
    assert r.sup_hess_phi == pytest.approx(4 * np.pi**2, rel=1e-3)
    assert r.sup_rm == 0
    # |nabla^{2+i} phi|^2 = (2 pi)^{4+2i} on a unit plane wave
    for i in range(3):
        assert r.l2avg_phi[i] == pytest.approx((2 * np.pi) ** (4 + 2 * i), rel=1e-2)


def test_pointwise_chain_and_ricci_bound(rough_state):
    r = dg.compute_record(rough_state)
    chain = dg.gradient_chain(r, 2, rough_state.chart.h, rough_state.chart.order)
    assert chain.passed
    assert 0 < dg.ricci_bound_excess(r, 2) <= 1.0


@settings(max_examples=8, deadline=None)
@given(c=st.floats(0.3, 3.0))
def test_dimensionless_averages_are_scale_invariant(c):
    s = ini.random_seeded(torus(16), build_rep(2), 0.1, seed=3, smoothness=2.0, modes=2)
    K = 7.0
    a = dg.existence_functionals(s, K)
    b = dg.existence_functionals(FlowState(s.chart, s.rep, c**2 * s.g, s.phi), K / c**2)
    assert np.allclose(a.rm_scaled, b.rm_scaled, rtol=1e-8)
    assert np.allclose(a.phi_scaled, b.phi_scaled, rtol=1e-8)
    assert a.k == 2 and a.P_k == pytest.approx(sum(a.F)) and a.P_k_minus_1 == pytest.approx(a.F[0] + a.F[1])


def test_existence_functionals_validation(rep2):
    s = ini.parallel(torus(8), rep2)
    with pytest.raises(ValueError):
        dg.existence_functionals(s, 0.0)
    with pytest.raises(ValueError):
        dg.existence_functionals(s, 1.0, weights=[1.0])
    s4 = ini.parallel(torus(8, n=4), build_rep(4))
    with pytest.raises(DerivativeBudgetError):
        dg.existence_functionals(s4, 1.0)


def test_blowup_monitor(rough_state):
    r = dg.compute_record(rough_state)
    mon = dg.BlowupMonitor(threshold=r.sup_hess_phi * 1.5)
    assert not mon.check(r).flagged
    big = dataclasses.replace(r, sup_hess_phi=r.sup_hess_phi * 2, step_index=7)
    assert mon.check(big).flagged and mon.first_flag == 7
    mon.check(dataclasses.replace(big, step_index=9))
    assert mon.first_flag == 7 and len(mon.log) == 3
    with pytest.raises(ValueError):
        dg.BlowupMonitor(0)


def test_interpolation_ratio_edge_cases():
    c = torus(16)
    g = c.identity_metric()
    const = np.broadcast_to([1.0, 2.0], c.dims + (2,)).copy()
    assert dg.interpolation_ratio(c, g, const, 1, 1, 2, 4) == 0.0
    assert math.isnan(dg.interpolation_ratio(c, g, np.zeros(c.dims + (2,)), 1, 1, 2, 4))
    with pytest.raises(ValueError):
        dg.interpolation_ratio(c, g, const, 1, 3, 2, 4)
    with pytest.raises(ValueError):
        dg.interpolation_ratio(c, g, const, 1, 1, 2, 3)


@pytest.mark.parametrize("lam", [1e-3, 0.5, 40.0])
def test_sobolev_ratios_are_homogeneous(lam):
    c = torus(32)
    _, g = conformal_metric(c, 0.2)
    x, y = c.coords()
    u = np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * y)
    assert dg.sobolev_ratio(c, g, lam * u) == pytest.approx(dg.sobolev_ratio(c, g, u), rel=1e-10)
    assert dg.multiplicative_sobolev_ratio(c, g, lam * u) == pytest.approx(
        dg.multiplicative_sobolev_ratio(c, g, u), rel=1e-10
    )
    with pytest.raises(ValueError):
        dg.sobolev_ratio(c, g, u, mu=2.0)
    with pytest.raises(ValueError):
        dg.multiplicative_sobolev_ratio(c, g, u, p=2.0)


def test_ricci_lower_bound_oracle():
    c = torus(64)
    f, g = conformal_metric(c, 0.1)
    K = np.exp(-2 * f) * 8 * np.pi**2 * f
    assert dg.ricci_lower_bound(c, g) == pytest.approx(-K.min(), rel=1e-3)
    assert dg.ricci_lower_bound(c, c.identity_metric()) == 0.0


def test_metric_equivalence_and_volume_bounds():
    c = torus(8)
    _, g = conformal_metric(c, 0.3)
    assert dg.metric_equivalence(g, g) == pytest.approx((1.0, 1.0))
    assert dg.metric_equivalence(g, 2 * g) == pytest.approx((2.0, 2.0))
    assert dg.volume_bounds(3.0, 0.0, 2) == (3.0, 3.0)
    lo, hi = dg.volume_bounds(1.0, 1.0, 4)
    assert lo == pytest.approx(math.exp(-1)) and hi == pytest.approx(math.e)


def test_fit_growth_constant():
    t = np.linspace(0, 1, 200)
    F = np.exp(0.7 * t)
    assert dg.fit_growth_constant(t, F, np.zeros_like(t)) == pytest.approx(0.7, rel=1e-3)
    assert dg.fit_growth_constant(t, np.exp(-t), np.ones_like(t)) == 0.0
    assert dg.fit_growth_constant([0.0], [1.0], [1.0]) == 0.0


def test_metric_rate_integral_and_curvature_fit(rough_state):
    r0 = dg.compute_record(rough_state)
    recs = [dataclasses.replace(r0, t=t, sup_metric_rate=2.0, sup_rm=r0.sup_rm * (1 + t)) for t in (0.0, 0.5, 1.0)]
    assert np.allclose(dg.metric_rate_integral(recs), [0.0, 1.0, 2.0])
    bound = dg.fit_curvature_bound([recs])
    assert bound.c2 == 1.0 and bound.c1 >= 0
    assert bound.holds(recs)
    tight = dg.CurvatureBound(c1=0.0, c2=0.0)
    assert not tight.holds(recs)


def test_curvature_evolution_linearizes_to_heat_equation(rep2):
    s = ini.metric_mode(torus(32), rep2, 1e-3, (1, 1))
    rm_dot = dg.rm_time_derivative(s, rhs_modified_flow(s).g_dot)
    res = dg.evolution_residual(s, rm_dot)
    assert res.leading > 0
    assert res.remainder / res.leading <= 0.1


def test_evolution_residual_series_tracks_instantaneous(rep2):
    s0 = ini.metric_mode(torus(16), rep2, 0.05, (1, 0))
    inst = dg.evolution_residual(s0, dg.rm_time_derivative(s0, rhs_modified_flow(s0).g_dot))
    gaps = []
    for dt in (2e-5, 1e-5):
        s1, _ = step(s0, dt, "euler")
        (res,) = dg.evolution_residual_series([s0, s1])
        gaps.append(abs(res.remainder - inst.remainder))
    assert gaps[1] < 0.75 * gaps[0] or gaps[1] < 1e-8 * inst.leading
