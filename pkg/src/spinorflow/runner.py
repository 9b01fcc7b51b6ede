"""Drive one configured run: initial data, stepping, diagnostics, artifacts."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import initial_data
from .clifford import build_rep
from .config import ConfigError, RunConfig
from .flow import FlowHalt, FlowState, RHS, cfl_timestep, step
from .io import load_checkpoint, save_checkpoint, write_csv, write_json

log = logging.getLogger("spinorflow")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_HALT = 3
EXIT_IO = 4


def time_step(cfg: RunConfig) -> float:
    return cfg.dt if cfg.dt is not None else cfl_timestep(cfg.chart(), cfg.cfl_factor)


def planned_steps(cfg: RunConfig) -> int:
    return int(math.ceil(cfg.t_end / time_step(cfg) - 1e-9))


def initial_state(cfg: RunConfig, resume=None) -> FlowState:
    if resume is not None:
        state, _ = load_checkpoint(resume)
        if state.chart.dims != tuple(cfg.dims) or state.chart.order != cfg.stencil_order:
            raise ConfigError("dims", "checkpoint lattice does not match the configuration")
        return state
    return initial_data.build(cfg.family, cfg.chart(), build_rep(cfg.dimension), **cfg.family_params())


def _rhs_norms(state: FlowState, system: str) -> dict:
    r = RHS[system](state)
    return {"metric": float(np.abs(r.g_dot).max()), "spinor": float(np.abs(r.phi_dot).max())}


def summarize(cfg: RunConfig, records, g0: np.ndarray, final: FlowState, halt: FlowHalt | None) -> dict:
    chart = final.chart
    n, h, p = chart.n, chart.h, chart.order
    chains = [dg.gradient_chain(r, n, h, p) for r in records]
    rate_int = dg.metric_rate_integral(records)
    lo, hi = dg.metric_equivalence(g0, final.g)
    C = float(rate_int[-1]) if len(rate_int) else 0.0
    vlo, vhi = dg.volume_bounds(records[0].vol, C, n)
    E = [r.E for r in records]
    return {
        "config": cfg.to_dict(),
        "dt": time_step(cfg),
        "steps_planned": planned_steps(cfg),
        "step_final": final.step_index,
        "t_final": final.t,
        "halted": None if halt is None else halt.reason,
        "halt_info": None if halt is None else {k: v for k, v in halt.info.items()},
        "E_initial": E[0],
        "E_final": E[-1],
        "energy_nonincreasing": bool(all(b <= a + 1e-10 * max(a, 1.0) for a, b in zip(E, E[1:]))),
        "checks": {
            "gradient_chain": bool(all(c.passed for c in chains)),
            "ricci_bound_ratio_max": max(dg.ricci_bound_excess(r, n) for r in records),
            "metric_equivalence": {"min_eig_ratio": lo, "max_eig_ratio": hi, "C": C,
                                   "passed": bool(math.exp(-C) <= lo * (1 + 1e-9) and hi <= math.exp(C) * (1 + 1e-9))},
            "volume": {"final": records[-1].vol, "lower": vlo, "upper": vhi,
                       "passed": bool(vlo * (1 - 1e-9) <= records[-1].vol <= vhi * (1 + 1e-9))},
            "blowup_flagged": bool(halt is not None and halt.reason == "blowup"),
        },
        "fitted": {
            "growth_constant_F0": dg.fit_growth_constant([r.t for r in records], [r.f[0] for r in records],
                                                         [r.vol for r in records]),
        },
    }


def execute(cfg: RunConfig, output_dir=None, resume=None) -> tuple[int, dict]:
    """Run to ``t_end``; writes ``trajectory.csv``, ``summary.json`` and checkpoints."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    state = initial_state(cfg, resume)
    out.mkdir(parents=True, exist_ok=True)
    dt = time_step(cfg)
    n_total = planned_steps(cfg)
    monitor = dg.BlowupMonitor(cfg.blowup_threshold)
    g0 = state.g.copy()
    rhs0 = _rhs_norms(state, cfg.system)
    records: list[dg.DiagnosticsRecord] = []
    halt = None
    log.info("run: %s on %s, dt=%.3e, %d steps", cfg.family, cfg.dims, dt, n_total)

    def observe(s):
        rec = dg.compute_record(s, cfg.alpha)
        records.append(rec)
        log.debug("step %d t=%.6g E=%.6g", s.step_index, s.t, rec.E)
        if monitor.check(rec).flagged:
            raise FlowHalt("blowup", s, sup_hess_phi=rec.sup_hess_phi, threshold=cfg.blowup_threshold)

    try:
        observe(state)
        while state.step_index < n_total:
            state, _ = step(state, dt, cfg.scheme, cfg.system)
            k = state.step_index
            if cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{k:06d}.spf", state, cfg.to_dict())
            if k % cfg.output_every == 0 or k == n_total:
                observe(state)
    except FlowHalt as err:
        halt = err
        log.warning("run halted: %s", err)

    write_csv(out / "trajectory.csv", dg.CSV_COLUMNS, [r.row() for r in records])
    save_checkpoint(out / "checkpoint_final.spf", state, cfg.to_dict())
    summary = summarize(cfg, records, g0, state, halt)
    summary["rhs_norm_initial"] = rhs0
    summary["exit_code"] = EXIT_HALT if halt is not None else EXIT_OK
    write_json(out / "summary.json", summary)
    return summary["exit_code"], summary
