import numpy as np
import pytest

from conftest import torus
from spinorflow import initial_data as ini
from spinorflow.clifford import build_rep, real_inner
from spinorflow.flow import (
    FlowHalt,
    FlowState,
    cfl_timestep,
    component_velocity,
    energy,
    frame_rotation_rate,
    grad_x_expanded,
    grad_x_lattice,
    rhs_modified_flow,
    rhs_spinor_flow,
    run,
    spinorial_lie,
    step,
    ttilde,
    ttilde_alt,
    x_vector,
    x_vector_coords,
)
from spinorflow.lattice import convergence_order, frame_from_metric


def random_state(N=16, seed=5, amplitude=0.1, n=2):
    return ini.random_seeded(torus(N, n=n), build_rep(n), amplitude, seed=seed, smoothness=2.0, modes=2)


@pytest.mark.parametrize("xi", [(1, 0), (0, 2), (1, 1)])
def test_plane_wave_energy(rep2, xi):
    s = ini.plane_wave(torus(64), rep2, xi)
    assert energy(s) == pytest.approx(2 * np.pi**2 * (xi[0] ** 2 + xi[1] ** 2), rel=1e-3)
    # the spinor part of the gradient vanishes on plane waves
    assert np.abs(rhs_spinor_flow(s).phi_dot).max() < 1e-2 * 4 * np.pi**2


def test_parallel_spinor_has_zero_energy_and_velocity(rep2):
    s = ini.parallel(torus(16), rep2)
    assert energy(s) == 0.0
    for rhs in (rhs_spinor_flow(s), rhs_modified_flow(s)):
        assert not rhs.g_dot.any() and not rhs.phi_dot.any()


def test_energy_invariances():
    s = random_state()
    E = energy(s)
    # constant rescaling of a surface metric leaves the energy unchanged
    scaled = FlowState(s.chart, s.rep, 2.5**2 * s.g, s.phi)
    assert energy(scaled) == pytest.approx(E, rel=1e-10)
    # a constant unitary acting on flat data commutes with differentiation
    flat = ini.plane_wave(torus(16), s.rep, (1, 1))
    U = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]]) * np.exp(0.2j)
    rotated = FlowState(flat.chart, flat.rep, flat.g, flat.phi @ U.T)
    assert energy(rotated) == pytest.approx(energy(flat), rel=1e-12)


def test_ttilde_forms_agree():
    # the two forms differ by Re<phi, nabla phi> terms, which vanish only up to truncation
    errs = []
    for N in (16, 32, 64):
        s = random_state(N)
        T = ttilde(s)
        assert np.abs(T - np.swapaxes(T, -1, -2)).max() < 1e-14
        errs.append(np.abs(T - ttilde_alt(s)).max())
    assert convergence_order([1 / 16, 1 / 32, 1 / 64], errs) >= 3.5


def test_x_vector_on_plane_wave(rep2):
    xi = np.array([1.0, 2.0])
    s = ini.plane_wave(torus(32), rep2, xi)
    X = x_vector(s)
    norm = np.linalg.norm(X, axis=-1)
    assert np.allclose(norm, 2 * np.pi * np.linalg.norm(xi), rtol=1e-3)
    assert np.abs(X @ xi).max() < 1e-3 * norm.max()


def test_x_vector_bound():
    s = random_state(amplitude=0.2, seed=9)
    d = s.derived()
    X = x_vector(s, d)
    assert np.all(np.linalg.norm(X, axis=-1) <= s.chart.n * np.sqrt(d.grad_sq) + 1e-12)


def test_spinorial_lie_simple_fields():
    s = random_state()
    zero = np.zeros(s.chart.dims + (2,))
    assert not spinorial_lie(s, zero).any()
    # on flat data a constant field just transports phi
    flat = ini.plane_wave(torus(16), s.rep, (1, 0))
    X = np.broadcast_to([0.7, -0.2], flat.chart.dims + (2,)).copy()
    expected = 0.7 * flat.chart.d(flat.phi, 0) - 0.2 * flat.chart.d(flat.phi, 1)
    assert np.allclose(spinorial_lie(flat, X), expected, atol=1e-12)


def test_grad_x_routes_converge():
    errs = []
    for N in (16, 32, 64):
        s = random_state(N)
        d = s.derived()
        errs.append(np.abs(grad_x_expanded(s, d) - grad_x_lattice(s, x_vector_coords(s, d), d)).max())
    assert convergence_order([1 / 16, 1 / 32, 1 / 64], errs) >= 3.5


@pytest.mark.parametrize("rhs_fn", [rhs_spinor_flow, rhs_modified_flow])
def test_spinor_velocity_is_vertical(rhs_fn):
    s = random_state(amplitude=0.15)
    r = rhs_fn(s)
    assert np.abs(real_inner(r.phi_dot, s.phi)).max() < 1e-13
    assert np.abs(r.g_dot - np.swapaxes(r.g_dot, -1, -2)).max() == 0.0


def test_frame_rotation_rate_matches_frame_derivative(rng):
    s = random_state(8, amplitude=0.2)
    h = rng.normal(size=s.g.shape)
    h = h + np.swapaxes(h, -1, -2)
    a = frame_rotation_rate(s.g, h)
    assert np.abs(a + np.swapaxes(a, -1, -2)).max() < 1e-14
    g_dot = np.einsum("...ai,...ij,...bj->...ab", s.theta, h, s.theta)
    eps = 1e-6
    de = (frame_from_metric(s.g + eps * g_dot) - frame_from_metric(s.g - eps * g_dot)) / (2 * eps)
    rate = np.einsum("...ia,...aj->...ij", s.theta, de)
    assert np.abs(rate - (-0.5 * h + a)).max() < 1e-7
    # isotropic metrics carry no rotation
    assert not frame_rotation_rate(np.broadcast_to(3 * np.eye(2), s.g.shape), h).any()


def test_component_velocity_gauge_term_vanishes_for_pure_trace(rep2):
    s = ini.conformal_bump(torus(16), rep2, 0.1)
    r = rhs_spinor_flow(s)
    assert np.abs(component_velocity(s, r) - r.phi_dot).max() < 1e-12


def test_parallel_fixed_point_under_stepping(rep2):
    s = ini.parallel(torus(12), rep2)
    traj = run(s, cfl_timestep(s.chart), 20)
    assert traj.halted is None
    assert np.array_equal(traj.final.g, s.g) and np.allclose(traj.final.phi, s.phi, atol=1e-15)
    assert traj.final.t == pytest.approx(20 * cfl_timestep(s.chart))


@pytest.mark.parametrize("scheme,expected", [("rk4", 3.5), ("euler", 0.9)])
def test_time_stepping_self_convergence(scheme, expected):
    s0 = random_state(12)
    T = 4 * cfl_timestep(s0.chart)

    def final(m):
        s = s0
        for _ in range(m):
            s, _ = step(s, T / m, scheme, "modified")
        return np.concatenate([s.g.ravel(), s.phi.view(float).ravel()])

    a, b, c = final(2), final(4), final(8)
    order = np.log2(np.abs(a - b).max() / np.abs(b - c).max())
    assert order >= expected


def test_step_rejects_unknown_names():
    s = random_state(8)
    with pytest.raises(ValueError):
        step(s, 1e-4, scheme="leapfrog")
    with pytest.raises(ValueError):
        step(s, 1e-4, system="ricci")


def test_metric_losing_positivity_halts(rep2):
    s = ini.metric_mode(torus(16), rep2, 0.9, (1, 0))
    with pytest.raises(FlowHalt) as info:
        step(s, -0.05, "euler", "modified")
    assert info.value.reason == "metric_not_positive"
    assert info.value.state is s
