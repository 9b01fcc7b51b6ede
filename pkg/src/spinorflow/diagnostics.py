"""Monitored quantities along the flow and the appendix inequality ratios.

Norms of tensors are taken in orthonormal-frame components; averages and
integrals are over the whole torus (cutoff identically one).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .flow import Derived, FlowState, energy, rhs_modified_flow
from .lattice import (
    MAX_DERIVATIVE_ORDER,
    DerivativeBudgetError,
    LatticeChart,
    cov_deriv_tensor,
    frame_from_metric,
    integrate,
    l2_average,
    riemann,
    sq_norm,
    to_frame,
    volume,
)
from .spin import iterated_cov_deriv

K_MAX = 2

CSV_COLUMNS = (
    ["t", "E", "sup_grad_phi_sq", "sup_hess_phi", "sup_rm"]
    + [f"l2avg_rm_{k}" for k in range(K_MAX + 1)]
    + [f"l2avg_phi_{k}" for k in range(K_MAX + 1)]
    + [f"f_{k}" for k in range(K_MAX + 1)]
    + ["vol"]
)


@dataclass
class DiagnosticsRecord:
    t: float
    E: float
    sup_grad_phi_sq: float
    sup_hess_phi: float
    sup_rm: float
    l2avg_rm: list[float]
    l2avg_phi: list[float]
    f: list[float]
    vol: float
    # not part of the CSV row
    step_index: int = 0
    sup_lap_phi: float = 0.0
    sup_ric: float = 0.0
    min_eig: float = 0.0
    sup_metric_rate: float = 0.0

    def row(self) -> list[float]:
        return (
            [self.t, self.E, self.sup_grad_phi_sq, self.sup_hess_phi, self.sup_rm]
            + list(self.l2avg_rm)
            + list(self.l2avg_phi)
            + list(self.f)
            + [self.vol]
        )

    def to_dict(self) -> dict:
        return asdict(self)


def rm_derivatives(state: FlowState, k: int, derived: Derived | None = None) -> list[np.ndarray]:
    """Pointwise ``|nabla^i Rm|^2`` for ``i = 0..k``."""
    if k > MAX_DERIVATIVE_ORDER - 2:
        raise DerivativeBudgetError(f"nabla^{k} Rm needs {k + 2} derivatives of the metric")
    d = derived if derived is not None else state.derived()
    rm = d.curvature.riemann
    out = []
    cur = rm
    for i in range(k + 1):
        if i:
            cur = cov_deriv_tensor(state.chart, state.g, cur, rank=3 + i, k=1, gamma=d.conn.gamma)
        out.append(sq_norm(to_frame(cur, state.e, 4 + i), 4 + i))
    return out


def phi_derivatives(state: FlowState, k: int, derived: Derived | None = None) -> list[np.ndarray]:
    """Pointwise ``|nabla^j phi|^2`` for ``j = 0..k``."""
    d = derived if derived is not None else state.derived()
    out = iterated_cov_deriv(state.phi, d.conn, k)
    return [sq_norm(T, j + 1) for j, T in enumerate(out)]


def compute_record(state: FlowState, alpha: float = 1.0, k_max: int = K_MAX) -> DiagnosticsRecord:
    d = state.derived()
    chart, g = state.chart, state.g
    rm_sq = rm_derivatives(state, k_max, d)
    phi_sq = phi_derivatives(state, k_max + 2, d)
    lap_norm = np.sqrt(np.sum(np.abs(d.lap) ** 2, axis=-1))
    ric_norm = np.sqrt(sq_norm(d.ricci, 2))
    rhs = rhs_modified_flow(state, d)
    return DiagnosticsRecord(
        t=float(state.t),
        E=energy(state, d),
        sup_grad_phi_sq=float(phi_sq[1].max()),
        sup_hess_phi=float(np.sqrt(phi_sq[2]).max()),
        sup_rm=float(np.sqrt(rm_sq[0]).max()),
        l2avg_rm=[l2_average(chart, g, r) for r in rm_sq],
        l2avg_phi=[l2_average(chart, g, phi_sq[2 + i]) for i in range(k_max + 1)],
        f=[alpha * integrate(chart, g, rm_sq[i]) + integrate(chart, g, phi_sq[2 + i]) for i in range(k_max + 1)],
        vol=volume(chart, g),
        step_index=int(state.step_index),
        sup_lap_phi=float(lap_norm.max()),
        sup_ric=float(ric_norm.max()),
        min_eig=float(np.linalg.eigvalsh(g)[..., 0].min()),
        sup_metric_rate=float(np.sqrt(sq_norm(rhs.h_frame, 2)).max()),
    )


# ---------------------------------------------------------------- pointwise chains


def field_scale(record: DiagnosticsRecord, order: int) -> float:
    """Dimension-matched scale ``sup|nabla^2 phi|^(1 + p/2)`` for truncation tolerances."""
    return max(record.sup_hess_phi, 1e-300) ** (1.0 + order / 2.0)


@dataclass
class ChainCheck:
    grad_vs_lap: float  # sup|nabla phi|^2 - sup|Lap phi|
    lap_vs_hess: float  # sup|Lap phi| - sqrt(n) sup|nabla^2 phi|
    tol: float

    @property
    def passed(self) -> bool:
        return self.grad_vs_lap <= self.tol and self.lap_vs_hess <= self.tol


def gradient_chain(record: DiagnosticsRecord, n: int, h: float, order: int) -> ChainCheck:
    """``sup|nabla phi|^2 <= sup|Lap phi| <= sqrt(n) sup|nabla^2 phi|`` up to ``10 h^p`` times the field scale."""
    tol = 10.0 * h**order * field_scale(record, order)
    return ChainCheck(
        grad_vs_lap=record.sup_grad_phi_sq - record.sup_lap_phi,
        lap_vs_hess=record.sup_lap_phi - math.sqrt(n) * record.sup_hess_phi,
        tol=tol,
    )


def ricci_bound_excess(record: DiagnosticsRecord, n: int) -> float:
    """``sup|Ric| / (2 n^2 sup|nabla^2 phi|)``; at most ``1 + O(h)`` for unit spinors."""
    denom = 2 * n * n * record.sup_hess_phi
    if denom == 0:
        return 0.0 if record.sup_ric == 0 else math.inf
    return record.sup_ric / denom


# ---------------------------------------------------------------- blow-up monitor


@dataclass
class MonitorStatus:
    flagged: bool
    sup_hess_phi: float
    sup_rm: float
    sup_grad_phi_sq: float


class BlowupMonitor:
    """Flags when ``sup|nabla^2 phi|`` exceeds ``threshold`` and keeps the log of companions."""

    def __init__(self, threshold: float):
        if not threshold > 0:
            raise ValueError("blow-up threshold must be positive")
        self.threshold = float(threshold)
        self.log: list[MonitorStatus] = []
        self.first_flag: int | None = None

    def check(self, record: DiagnosticsRecord) -> MonitorStatus:
        st = MonitorStatus(
            flagged=record.sup_hess_phi > self.threshold,
            sup_hess_phi=record.sup_hess_phi,
            sup_rm=record.sup_rm,
            sup_grad_phi_sq=record.sup_grad_phi_sq,
        )
        if st.flagged and self.first_flag is None:
            self.first_flag = record.step_index
        self.log.append(st)
        return st


# ---------------------------------------------------------------- time-series analyses


def bernstein_series(records: Sequence[DiagnosticsRecord], k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(t, t^k avg|nabla^k Rm|^2, t^k avg|nabla^(2+k) phi|^2)``."""
    t = np.array([r.t for r in records])
    rm = np.array([r.l2avg_rm[k] for r in records])
    ph = np.array([r.l2avg_phi[k] for r in records])
    return t, t**k * rm, t**k * ph


def run_scale(records: Sequence[DiagnosticsRecord]) -> float:
    """``K = max(sup|Rm|, sup|nabla^2 phi|, sup|nabla phi|^2)`` over a run."""
    return max(max(r.sup_rm, r.sup_hess_phi, r.sup_grad_phi_sq) for r in records)


def metric_rate_integral(records: Sequence[DiagnosticsRecord]) -> np.ndarray:
    """Cumulative trapezoid integral of ``sup|dg/dt|`` over the records."""
    t = np.array([r.t for r in records])
    v = np.array([r.sup_metric_rate for r in records])
    out = np.zeros(len(t))
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))
    return out


def metric_equivalence(g0: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Extreme eigenvalues of ``g(0)^-1 g(t)`` over all sites."""
    e0 = frame_from_metric(g0)
    w = np.linalg.eigvalsh(np.einsum("...ai,...ab,...bj->...ij", e0, gt, e0))
    return float(w.min()), float(w.max())


def volume_bounds(v0: float, rate_integral: float, n: int) -> tuple[float, float]:
    """``V(0) e^{-+C}`` with ``C = (sqrt(n)/2) int sup|dg/dt|``, since ``|d log V/dt| <= |tr h|/2``."""
    c = 0.5 * math.sqrt(n) * rate_integral
    return v0 * math.exp(-c), v0 * math.exp(c)


def fit_growth_constant(t: Sequence[float], F: Sequence[float], vol: Sequence[float]) -> float:
    """Smallest ``C`` with ``dF/dt <= C (F + V)`` on every finite-difference interval."""
    t, F, vol = (np.asarray(a, dtype=float) for a in (t, F, vol))
    dF = np.diff(F) / np.diff(t)
    base = 0.5 * (F[1:] + F[:-1]) + 0.5 * (vol[1:] + vol[:-1])
    return float(max(0.0, np.max(dF / base))) if len(dF) else 0.0


@dataclass
class CurvatureBound:
    """``sup|Rm|(t) <= (sup|Rm|(0) + c1 K) exp(c2 K t)``."""

    c1: float
    c2: float

    def value(self, rm0: float, K: float, t: float) -> float:
        return (rm0 + self.c1 * K) * math.exp(self.c2 * K * t)

    def holds(self, records: Sequence[DiagnosticsRecord]) -> bool:
        K = run_scale_lower(records)
        rm0 = records[0].sup_rm
        return all(r.sup_rm <= self.value(rm0, K, r.t) for r in records)


def run_scale_lower(records: Sequence[DiagnosticsRecord]) -> float:
    """Spinor-only scale ``max(sup|nabla phi|^2, sup|nabla^2 phi|)`` over a run."""
    return max(max(r.sup_hess_phi, r.sup_grad_phi_sq) for r in records)


def fit_curvature_bound(runs: Sequence[Sequence[DiagnosticsRecord]], c2: float = 1.0, margin: float = 2.0) -> CurvatureBound:
    """Fit ``c1`` on calibration runs (times ``margin``) for a fixed growth rate ``c2``."""
    c1 = 0.0
    for recs in runs:
        K = run_scale_lower(recs)
        if K == 0:
            continue
        rm0 = recs[0].sup_rm
        for r in recs:
            need = (r.sup_rm * math.exp(-c2 * K * r.t) - rm0) / K
            c1 = max(c1, need)
    return CurvatureBound(c1=margin * c1, c2=c2)


# ---------------------------------------------------------------- existence-time functionals


@dataclass
class ExistenceFunctionals:
    F: list[float]
    P_k: float
    P_k_minus_1: float
    F_0: float
    rm_scaled: list[float]  # avg K^{-2-i} |nabla^i Rm|^2
    phi_scaled: list[float]  # avg K^{-2-i} |nabla^{2+i} phi|^2
    k: int = field(default=0)


def existence_functionals(
    state: FlowState, K: float, alpha: float = 1.0, weights: Sequence[float] | None = None
) -> ExistenceFunctionals:
    """``F_i``, the combinations ``P_k``, ``P_(k-1)`` and the dimensionless initial-data averages.

    ``k = floor(n/2) + 1``.  ``weights[i-1]`` multiplies ``F_(k-i)`` in ``P_k``
    (and ``F_(k-1-i)`` in ``P_(k-1)``); they default to one because the
    constants they stand for are not constructive.
    """
    if not K > 0:
        raise ValueError("scale K must be positive")
    n = state.chart.n
    k = n // 2 + 1
    if k + 2 > MAX_DERIVATIVE_ORDER:
        raise DerivativeBudgetError(f"dimension {n} needs nabla^{k + 2} phi")
    weights = list(weights) if weights is not None else [1.0] * k
    if len(weights) < k:
        raise ValueError(f"need {k} weights")
    d = state.derived()
    chart, g = state.chart, state.g
    rm_sq = rm_derivatives(state, k, d)
    phi_sq = phi_derivatives(state, k + 2, d)
    F = [alpha * integrate(chart, g, rm_sq[i]) + integrate(chart, g, phi_sq[i + 2]) for i in range(k + 1)]
    P_k = F[k] + sum(weights[i - 1] * F[k - i] for i in range(1, k + 1))
    P_km1 = F[k - 1] + sum(weights[i - 1] * F[k - 1 - i] for i in range(1, k))
    return ExistenceFunctionals(
        F=F,
        P_k=P_k,
        P_k_minus_1=P_km1,
        F_0=F[0],
        rm_scaled=[l2_average(chart, g, rm_sq[i]) * K ** (-2 - i) for i in range(k + 1)],
        phi_scaled=[l2_average(chart, g, phi_sq[i + 2]) * K ** (-2 - i) for i in range(k + 1)],
        k=k,
    )


# ---------------------------------------------------------------- appendix inequalities


def _tensor_derivs(chart: LatticeChart, g: np.ndarray, A: np.ndarray, rank: int, orders: Sequence[int]):
    e = frame_from_metric(g)
    out = {}
    for k in orders:
        T = cov_deriv_tensor(chart, g, A, rank, k) if k else A
        if rank + k:
            T = to_frame(T, e, rank + k)
        out[k] = np.sqrt(sq_norm(T, rank + k))
    return out


def interpolation_ratio(
    chart: LatticeChart,
    g: np.ndarray,
    A: np.ndarray,
    rank: int,
    i: int,
    k: int,
    m: int,
    eta: np.ndarray | None = None,
) -> float:
    """LHS/RHS of the ``L^(2k/i)`` interpolation inequality for a covariant tensor field.

    Returns ``nan`` when the right-hand side vanishes (``A`` identically zero).
    """
    if not (1 <= i <= k):
        raise ValueError("need 1 <= i <= k")
    if m < 2 * k:
        raise ValueError("need m >= 2k")
    if eta is None:
        eta = np.ones(chart.dims)
    norms = _tensor_derivs(chart, g, A, rank, [0, i, k])
    w = eta**m
    lhs = integrate(chart, g, w * norms[i] ** (2 * k / i)) ** (i / (2 * k))
    sup_a = norms[0].max()
    l2_a = math.sqrt(integrate(chart, g, np.where(eta > 0, norms[0] ** 2, 0.0)))
    rhs = sup_a ** (1 - i / k) * (math.sqrt(integrate(chart, g, w * norms[k] ** 2)) + l2_a) ** (i / k)
    if rhs == 0:
        return math.nan
    return lhs / rhs


def ricci_lower_bound(chart: LatticeChart, g: np.ndarray) -> float:
    """``K >= 0`` with ``Ric >= -K g`` everywhere."""
    ric = riemann(chart, g).ricci
    e = frame_from_metric(g)
    w = np.linalg.eigvalsh(to_frame(ric, e, 2))
    return float(max(0.0, -w.min()))


def _torus_ball(chart: LatticeChart, g: np.ndarray) -> tuple[float, float, float]:
    r = 0.5 * min(chart.lengths)
    return r, volume(chart, g), ricci_lower_bound(chart, g)


def sobolev_ratio(chart: LatticeChart, g: np.ndarray, u: np.ndarray, mu: float = 4.0, c_n: float = 1.0) -> float:
    """LHS/RHS of the ``L^(2mu/(mu-2))`` Sobolev inequality with the volume-ratio constant.

    The whole torus plays the ball: ``r`` is half the shortest period,
    ``V(r)`` the total volume and ``K`` the Ricci lower bound.
    """
    if not mu > 2:
        raise ValueError("need mu > 2")
    r, V, K = _torus_ball(chart, g)
    q = 2 * mu / (mu - 2)
    grad = _tensor_derivs(chart, g, u, 0, [1])[1]
    lhs = integrate(chart, g, np.abs(u) ** q) ** ((mu - 2) / mu)
    const = c_n * r**2 * math.exp(math.sqrt(K) * r) / V ** (2 / mu)
    rhs = const * integrate(chart, g, grad**2 + u**2 / r**2)
    return math.nan if rhs == 0 else lhs / rhs


def multiplicative_sobolev_ratio(
    chart: LatticeChart, g: np.ndarray, u: np.ndarray, p: float = 4.0, m: float = 2.0, c_n: float = 1.0
) -> float:
    """LHS/RHS of ``|u|_inf <= C_S^a |u|_{L^m}^(1-a) (|nabla u|_{L^p} + |u|_{L^p}/r)^a``.

    ``1/a = (1/n - 1/p) m + 1``; ``C_S = c_n r e^(sqrt(K) r/2) / V^(1/n)`` with
    the same torus-as-ball conventions as :func:`sobolev_ratio`.
    """
    n = chart.n
    if not p > n:
        raise ValueError("need p > n")
    a = 1.0 / ((1.0 / n - 1.0 / p) * m + 1.0)
    r, V, K = _torus_ball(chart, g)
    cs = c_n * r * math.exp(math.sqrt(K) * r / 2) / V ** (1.0 / n)
    grad = _tensor_derivs(chart, g, u, 0, [1])[1]
    lm = integrate(chart, g, np.abs(u) ** m) ** (1 / m)
    gp = integrate(chart, g, grad**p) ** (1 / p)
    up = integrate(chart, g, np.abs(u) ** p) ** (1 / p)
    rhs = cs**a * lm ** (1 - a) * (gp + up / r) ** a
    return math.nan if rhs == 0 else float(np.abs(u).max() / rhs)


# ---------------------------------------------------------------- curvature evolution residual


@dataclass
class EvolutionResidual:
    constant: float  # max |dRm/dt - (1/16) Lap Rm| / bound over the sites
    leading: float  # sup |(1/16) Lap Rm|
    remainder: float  # sup |dRm/dt - (1/16) Lap Rm|


def _rm_lap_and_bound(state: FlowState):
    d = state.derived()
    chart, g = state.chart, state.g
    rm = d.curvature.riemann
    ginv = np.linalg.inv(g)
    dd = cov_deriv_tensor(chart, g, rm, rank=4, k=2, gamma=d.conn.gamma)
    lap = np.einsum("...ab,...abcdef->...cdef", ginv, dd)
    phi_sq = phi_derivatives(state, 3, d)
    rm_n = np.sqrt(sq_norm(to_frame(rm, state.e, 4), 4))
    g1 = np.sqrt(phi_sq[1])
    bound = rm_n**2 + rm_n * g1**2 + np.sqrt(phi_sq[3]) * g1 + phi_sq[2]
    return rm, lap, bound


def rm_time_derivative(state: FlowState, g_dot: np.ndarray, s: float = 1e-4) -> np.ndarray:
    """Instantaneous ``dRm/dt`` along ``g_dot`` (central difference in the metric)."""
    chart = state.chart
    rp = riemann(chart, state.g + s * g_dot).riemann
    rm = riemann(chart, state.g - s * g_dot).riemann
    return (rp - rm) / (2 * s)


def evolution_residual(state: FlowState, rm_dot: np.ndarray, floor: float = 1e-14) -> EvolutionResidual:
    """Compare a time derivative of the (all-lower) Riemann tensor with ``(1/16) Lap Rm``."""
    _, lap, bound = _rm_lap_and_bound(state)
    rem = to_frame(rm_dot - lap / 16.0, state.e, 4)
    rem_n = np.sqrt(sq_norm(rem, 4))
    lead_n = np.sqrt(sq_norm(to_frame(lap / 16.0, state.e, 4), 4))
    mask = bound > floor
    const = float(np.max(rem_n[mask] / bound[mask])) if mask.any() else 0.0
    return EvolutionResidual(constant=const, leading=float(lead_n.max()), remainder=float(rem_n.max()))


def evolution_residual_series(states: Sequence[FlowState]) -> list[EvolutionResidual]:
    """Residuals using midpoint finite differences in time between consecutive snapshots."""
    out = []
    for a, b in zip(states[:-1], states[1:]):
        dt = b.t - a.t
        rm_dot = (riemann(b.chart, b.g).riemann - riemann(a.chart, a.g).riemann) / dt
        mid = FlowState(a.chart, a.rep, 0.5 * (a.g + b.g), a.phi, 0.5 * (a.t + b.t), a.step_index)
        out.append(evolution_residual(mid, rm_dot))
    return out
