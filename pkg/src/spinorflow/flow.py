"""Spinor flow and its gauge-fixed (modified) form on lattice data.

Both systems are assembled in orthonormal-frame indices.  The metric
velocity is returned in frame indices (``h_frame``) and in coordinates
(``g_dot = theta^T h_frame theta``); the spinor velocity ``phi_dot`` is the
geometric one, i.e. relative to a frame transported along the metric
deformation.  :func:`component_velocity` converts it into the rate of change
of the stored components for our ``g^(-1/2)`` frame gauge.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from .clifford import CliffordRep, real_inner, spin_generator, two_form_mul
from .lattice import (
    LatticeChart,
    NonPositiveMetricError,
    check_metric,
    cov_deriv_tensor,
    from_frame,
    frame_from_metric,
    integrate,
    lie_derivative_metric,
    lower,
    riemann,
    to_frame,
)
from .spin import (
    SpinConnection,
    check_unit,
    cov_deriv,
    dirac,
    frame_cov_deriv,
    laplacian,
    second_cov_deriv,
    spin_connection,
)

SYSTEMS = ("spinor", "modified")
SCHEMES = ("euler", "rk4")


@dataclass
class FlowState:
    """Snapshot ``(g, phi, t)``; ``phi`` holds spinor components in the ``g^(-1/2)`` frame."""

    chart: LatticeChart
    rep: CliffordRep
    g: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    step_index: int = 0
    e: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.chart.n
        if self.g.shape != self.chart.dims + (n, n):
            raise ValueError(f"metric has shape {self.g.shape}, expected {self.chart.dims + (n, n)}")
        if self.phi.shape != self.chart.dims + (self.rep.dim,):
            raise ValueError(f"spinor has shape {self.phi.shape}, expected {self.chart.dims + (self.rep.dim,)}")
        self.g = np.asarray(self.g, dtype=float)
        self.phi = np.asarray(self.phi, dtype=complex)
        self.e, self.theta = frame_from_metric(self.g, with_coframe=True)
        check_unit(self.phi)

    def derived(self) -> "Derived":
        return Derived(self)


class Derived:
    """Lazily computed geometric quantities of one state."""

    def __init__(self, state: FlowState):
        self.state = state
        self.chart = state.chart
        self.rep = state.rep
        self.phi = state.phi

    @cached_property
    def conn(self) -> SpinConnection:
        return spin_connection(self.chart, self.state.g, self.rep, self.state.e)

    @cached_property
    def dphi(self) -> np.ndarray:
        return cov_deriv(self.phi, self.conn)

    @cached_property
    def hess(self) -> np.ndarray:
        return second_cov_deriv(self.phi, self.conn, self.dphi)

    @cached_property
    def lap(self) -> np.ndarray:
        return laplacian(self.phi, self.conn, self.hess)

    @cached_property
    def grad_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.dphi) ** 2, axis=(-2, -1))

    @cached_property
    def dirac(self) -> np.ndarray:
        return dirac(self.phi, self.conn, self.dphi)

    @cached_property
    def grad_dirac(self) -> np.ndarray:
        # nabla_j (D phi); shape (*sites, n, dim)
        return frame_cov_deriv(self.conn, self.dirac, 0, True)

    @cached_property
    def curvature(self):
        return riemann(self.chart, self.state.g, self.conn.gamma)

    @cached_property
    def ricci(self) -> np.ndarray:
        """Frame-index Ricci tensor from the Christoffel pipeline."""
        return to_frame(self.curvature.ricci, self.state.e, 2)

    def gamma_dphi(self) -> np.ndarray:
        # [..., j, k, :] = e_j . nabla_k phi
        return np.einsum("jab,...kb->...jka", self.rep.gamma, self.dphi)


@dataclass
class FlowRhs:
    g_dot: np.ndarray  # coordinate components
    h_frame: np.ndarray  # frame components of g_dot
    phi_dot: np.ndarray  # vertical spinor velocity
    # max |Re<phi_dot, phi>| removed by the vertical projection
    vertical_residual: float = 0.0


def _d(state: FlowState, derived: Derived | None) -> Derived:
    return derived if derived is not None else state.derived()


def energy(state: FlowState, derived: Derived | None = None) -> float:
    """``(1/2) int |nabla phi|^2 dv``."""
    d = _d(state, derived)
    return 0.5 * integrate(state.chart, state.g, d.grad_sq)


def ttilde(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    """Frame 3-tensor ``(1/2)<e_i^e_j.phi, nabla_k phi> + (1/2)<e_i^e_k.phi, nabla_j phi>``."""
    d = _d(state, derived)
    rep = state.rep
    eye = np.eye(rep.n)[:, :, None, None] * np.eye(rep.dim)
    wedge = np.einsum("ijab,...b->...ija", rep.pairs + eye, state.phi)
    half = 0.5 * real_inner(wedge[..., :, :, None, :], d.dphi[..., None, None, :, :])
    return half + np.swapaxes(half, -1, -2)


def ttilde_alt(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    """Same tensor as :func:`ttilde` via ``(1/2)<e_i.phi, e_j.nabla_k phi + e_k.nabla_j phi>``."""
    d = _d(state, derived)
    gphi = np.einsum("iab,...b->...ia", state.rep.gamma, state.phi)
    gd = d.gamma_dphi()
    sym = gd + np.swapaxes(gd, -3, -2)
    return 0.5 * real_inner(gphi[..., :, None, None, :], sym[..., None, :, :, :])


def t_tensor_div(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    """Divergence of :func:`ttilde` over its first slot."""
    d = _d(state, derived)
    dT = frame_cov_deriv(d.conn, ttilde(state, d), 3, False)
    return np.einsum("...iijk->...jk", dT)


def t_tensor_lemma(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    """The T tensor rewritten through Ricci, first derivatives and ``nabla D phi``."""
    d = _d(state, derived)
    check_unit(state.phi)
    gd = d.gamma_dphi()
    sym1 = gd + np.swapaxes(gd, -3, -2)
    gdd = np.einsum("jab,...kb->...jka", state.rep.gamma, d.grad_dirac)
    sym2 = gdd + np.swapaxes(gdd, -3, -2)
    D = d.dirac[..., None, None, :]
    phi = state.phi[..., None, None, :]
    return (
        -0.5 * d.ricci
        - 2.0 * real_inner(d.dphi[..., :, None, :], d.dphi[..., None, :, :])
        + 0.5 * real_inner(D, sym1)
        + 0.5 * real_inner(phi, sym2)
    )


def _project(phi_dot: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, float]:
    radial = real_inner(phi_dot, phi) / np.sum(np.abs(phi) ** 2, axis=-1)
    return phi_dot - radial[..., None] * phi, float(np.abs(radial).max())


def _finish(state: FlowState, h_frame: np.ndarray, phi_dot: np.ndarray) -> FlowRhs:
    h_frame = 0.5 * (h_frame + np.swapaxes(h_frame, -1, -2))
    g_dot = from_frame(h_frame, state.theta, 2)
    g_dot = 0.5 * (g_dot + np.swapaxes(g_dot, -1, -2))
    phi_dot, res = _project(phi_dot, state.phi)
    return FlowRhs(g_dot=g_dot, h_frame=h_frame, phi_dot=phi_dot, vertical_residual=res)


def _spinor_heat(state: FlowState, d: Derived) -> np.ndarray:
    return d.lap + d.grad_sq[..., None] * state.phi


def rhs_spinor_flow(state: FlowState, derived: Derived | None = None) -> FlowRhs:
    """Negative gradient of the energy (divergence form of the T tensor)."""
    d = _d(state, derived)
    n = state.chart.n
    T = t_tensor_div(state, d)
    pair = real_inner(d.dphi[..., :, None, :], d.dphi[..., None, :, :])
    h = 0.25 * T + 0.5 * pair - 0.25 * d.grad_sq[..., None, None] * np.eye(n)
    return _finish(state, h, _spinor_heat(state, d))


def x_vector(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    """Frame components ``X_i = Re<phi, e_i . D phi>``."""
    d = _d(state, derived)
    gD = np.einsum("iab,...b->...ia", state.rep.gamma, d.dirac)
    return real_inner(state.phi[..., None, :], gD)


def x_vector_coords(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    return np.einsum("...ai,...i->...a", state.e, x_vector(state, derived))


def grad_x_expanded(state: FlowState, derived: Derived | None = None) -> np.ndarray:
    """``[..., j, i] = nabla_j X_i`` by the product rule on ``<phi, e_i . D phi>``."""
    d = _d(state, derived)
    gD = np.einsum("iab,...b->...ia", state.rep.gamma, d.dirac)
    gdD = np.einsum("iab,...jb->...jia", state.rep.gamma, d.grad_dirac)
    return real_inner(d.dphi[..., :, None, :], gD[..., None, :, :]) + real_inner(
        state.phi[..., None, None, :], gdD
    )


def grad_x_lattice(state: FlowState, X: np.ndarray, derived: Derived | None = None) -> np.ndarray:
    """``[..., j, i] = nabla_j X_i`` for a coordinate vector field via Christoffel symbols."""
    d = _d(state, derived)
    dX = cov_deriv_tensor(state.chart, state.g, lower(state.g, X), rank=1, gamma=d.conn.gamma)
    return to_frame(dX, state.e, 2)


def spinorial_lie(
    state: FlowState, X: np.ndarray, derived: Derived | None = None, grad_x: np.ndarray | None = None
) -> np.ndarray:
    """``X_i nabla_i phi - (1/4) sum_ij (nabla_j X_i) e_j ^ e_i . phi`` for a coordinate field X.

    ``grad_x`` (frame ``nabla_j X_i``) defaults to the Christoffel-route derivative of X.
    """
    d = _d(state, derived)
    Xf = np.einsum("...ab,...b->...a", state.theta, X)  # theta^i_a X^a
    if grad_x is None:
        grad_x = grad_x_lattice(state, X, d)
    transport = np.einsum("...i,...is->...s", Xf, d.dphi)
    return transport - 0.25 * two_form_mul(state.rep, grad_x, state.phi)


def rhs_modified_flow(state: FlowState, derived: Derived | None = None) -> FlowRhs:
    """Spinor flow pulled back along the flow of ``-(1/8) X`` (expanded form)."""
    d = _d(state, derived)
    n = state.chart.n
    gd = d.gamma_dphi()
    sym = gd + np.swapaxes(gd, -3, -2)
    h = (
        -0.125 * d.ricci
        - 0.25 * d.grad_sq[..., None, None] * np.eye(n)
        + 0.25 * real_inner(d.dirac[..., None, None, :], sym)
    )
    X = x_vector(state, d)
    transport = np.einsum("...i,...is->...s", X, d.dphi)
    rot = two_form_mul(state.rep, grad_x_expanded(state, d), state.phi)
    phi_dot = _spinor_heat(state, d) - 0.125 * transport + (1.0 / 32.0) * rot
    return _finish(state, h, phi_dot)


def pullback_residual(state: FlowState, derived: Derived | None = None) -> tuple[float, float]:
    """Max-norm mismatch of the modified rhs against spinor-flow rhs minus (1/8) Lie terms.

    The Lie derivatives are computed on the coordinate route (Christoffel
    symbols), independently of the expanded formulas used by the modified rhs.
    """
    d = _d(state, derived)
    r2 = rhs_spinor_flow(state, d)
    r8 = rhs_modified_flow(state, d)
    X = x_vector_coords(state, d)
    lie_g = to_frame(lie_derivative_metric(state.chart, state.g, X, d.conn.gamma), state.e, 2)
    lie_phi, _ = _project(spinorial_lie(state, X, d), state.phi)
    metric = np.abs(r8.h_frame - (r2.h_frame - 0.125 * lie_g)).max()
    spinor = np.abs(r8.phi_dot - (r2.phi_dot - 0.125 * lie_phi)).max()
    return float(metric), float(spinor)


RHS = {"spinor": rhs_spinor_flow, "modified": rhs_modified_flow}


def frame_rotation_rate(g: np.ndarray, h_frame: np.ndarray) -> np.ndarray:
    """Rotation of the ``g^(-1/2)`` frame relative to the metric-transported frame.

    Returns the antisymmetric frame matrix ``a`` with ``e^{-1} de/dt = -h/2 + a``.
    """
    w, Q = np.linalg.eigh(g)
    s = np.sqrt(w)
    # e = g^(-1/2) is diagonal in the eigenbasis, so rotating h by Q gives the
    # eigenbasis frame components directly
    ht = np.einsum("...ai,...ab,...bj->...ij", Q, h_frame, Q)
    coef = (s[..., None, :] - s[..., :, None]) / (2.0 * (s[..., :, None] + s[..., None, :]))
    return np.einsum("...ai,...ij,...bj->...ab", Q, ht * coef, Q)


def component_velocity(state: FlowState, rhs: FlowRhs) -> np.ndarray:
    """Rate of change of the stored spinor components in the ``g^(-1/2)`` gauge."""
    a = frame_rotation_rate(state.g, rhs.h_frame)
    return rhs.phi_dot - np.einsum("...ab,...b->...a", spin_generator(state.rep, a), state.phi)


def cfl_timestep(chart: LatticeChart, cfl: float = 0.2, max_diffusion: float = 1.0) -> float:
    return cfl * chart.h**2 / (2 * chart.n * max_diffusion)


class FlowHalt(RuntimeError):
    """Structured stop of a time integration."""

    def __init__(self, reason: str, state: FlowState | None = None, **info):
        self.reason = reason
        self.state = state
        self.info = info
        super().__init__(reason if not info else f"{reason}: {info}")


@dataclass
class StepInfo:
    norm_drift: float  # max | |phi| - 1 | before renormalization


def _velocity(state: FlowState, system: str) -> tuple[np.ndarray, np.ndarray]:
    rhs = RHS[system](state)
    return rhs.g_dot, component_velocity(state, rhs)


def _shift(state: FlowState, dg, dc, dt) -> FlowState:
    # stage states are not renormalized; only the accepted step is
    g = state.g + dt * dg
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    c = state.phi + dt * dc
    c = c / np.linalg.norm(c, axis=-1, keepdims=True)
    try:
        return FlowState(state.chart, state.rep, g, c, state.t + dt, state.step_index)
    except NonPositiveMetricError as err:
        raise FlowHalt("metric_not_positive", state, site=err.site, eigenvalue=err.eigenvalue) from err


def step(state: FlowState, dt: float, scheme: str = "rk4", system: str = "modified") -> tuple[FlowState, StepInfo]:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}")
    if scheme == "euler":
        dg, dc = _velocity(state, system)
    else:
        k1 = _velocity(state, system)
        k2 = _velocity(_shift(state, *k1, dt / 2), system)
        k3 = _velocity(_shift(state, *k2, dt / 2), system)
        k4 = _velocity(_shift(state, *k3, dt), system)
        dg = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        dc = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    g = state.g + dt * dg
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    c = state.phi + dt * dc
    norm = np.linalg.norm(c, axis=-1)
    drift = float(np.abs(norm - 1.0).max())
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(c)):
        raise FlowHalt("non_finite", state)
    try:
        check_metric(g)
    except NonPositiveMetricError as err:
        raise FlowHalt("metric_not_positive", state, site=err.site, eigenvalue=err.eigenvalue) from err
    new = FlowState(state.chart, state.rep, g, c / norm[..., None], state.t + dt, state.step_index + 1)
    return new, StepInfo(norm_drift=drift)


@dataclass
class Trajectory:
    states: list[FlowState]  # snapshots at the observation cadence
    infos: list[StepInfo]
    final: FlowState
    halted: FlowHalt | None = None


def run(
    state: FlowState,
    dt: float,
    n_steps: int,
    scheme: str = "rk4",
    system: str = "modified",
    every: int = 1,
    observer: Callable[[FlowState], str | None] | None = None,
    keep_states: bool = False,
) -> Trajectory:
    """Integrate ``n_steps`` steps; ``observer`` sees every ``every``-th state and may halt the run
    by returning a reason string."""
    states, infos = [], []
    halted = None

    def observe(s):
        if keep_states:
            states.append(s)
        if observer is not None:
            reason = observer(s)
            if reason:
                raise FlowHalt(reason, s)

    try:
        observe(state)
        for k in range(n_steps):
            state, info = step(state, dt, scheme, system)
            infos.append(info)
            if (k + 1) % every == 0 or k + 1 == n_steps:
                observe(state)
    except FlowHalt as err:
        halted = err
    return Trajectory(states=states, infos=infos, final=state, halted=halted)


def with_time(state: FlowState, t: float, step_index: int) -> FlowState:
    return replace(state, t=t, step_index=step_index)
