"""Extreme operating points: heavy extra load at a few chosen buses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pmuse.errors import DivergenceError, GenerationError
from pmuse.netmodel import NetworkCase
from pmuse.powerflow import PfOptions, PowerFlowSolver
from pmuse.sampler.injection import InjectionMapper, InjectionModel, row_rng

MAX_REDUCTIONS = 12


@dataclass(frozen=True)
class ExtremeScenarios:
    p: np.ndarray
    q: np.ndarray
    v_set: np.ndarray
    scales: np.ndarray
    states: np.ndarray
    reductions: int

    def __len__(self):
        return len(self.scales)


def default_load_floor(case: NetworkCase) -> tuple[float, float]:
    """Mean non-zero bus P and Q load; stands in for the load of a bus with none."""
    p = np.array([b.p_load for b in case.buses])
    q = np.array([b.q_load for b in case.buses])
    pf = float(p[p > 0].mean()) if np.any(p > 0) else 0.0
    qf = float(q[q > 0].mean()) if np.any(q > 0) else 0.0
    return pf, qf


def make_extreme_scenarios(
    case: NetworkCase,
    stressed_buses,
    scale_range=(2.0, 4.0),
    count: int = 1000,
    seed: int = 0,
    model: InjectionModel | None = None,
    load_floor: tuple[float, float] | None = None,
    pf_options: PfOptions | None = None,
) -> ExtremeScenarios:
    """Operating points with the load at ``stressed_buses`` scaled up.

    Each scenario draws one scale ``s`` from ``scale_range`` and adds
    ``(s - 1) * max(load, floor)`` of extra demand at every stressed bus, so
    a bus with no base load (a pure generator bus) is still stressed and
    ``s = 1`` reproduces the base injections. An optional ``model`` adds the
    usual random variation on top. Non-convergent points are retried with
    the extra load halved; the number of such reductions is reported.
    """
    lo, hi = (float(scale_range[0]), float(scale_range[-1]))
    if lo < 1.0 or hi < lo:
        raise ValueError("scale range must satisfy 1 <= low <= high")
    idx = [case.bus_index[case.bus(b).id] for b in stressed_buses]
    pf, qf = load_floor if load_floor is not None else default_load_floor(case)
    p_load = np.array([max(case.buses[i].p_load, pf) for i in idx])
    q_load = np.array([max(case.buses[i].q_load, qf) for i in idx])

    solver = PowerFlowSolver(case, pf_options)
    mapper = InjectionMapper(case, model.channels) if model is not None else None
    n = case.n_bus
    out_p = np.empty((count, n))
    out_q = np.empty((count, n))
    out_v = np.empty((count, n))
    out_x = np.empty((count, 2 * n))
    scales = np.empty(count)
    reductions = 0
    for k in range(count):
        rng = row_rng(seed, k)
        s = rng.uniform(lo, hi)
        if mapper is not None:
            p, q, v = mapper(model.draw_row(rng))
        else:
            p, q, v = solver.p_base.copy(), solver.q_base.copy(), solver.v_base.copy()
        for attempt in range(MAX_REDUCTIONS):
            pk, qk = p.copy(), q.copy()
            pk[idx] -= (s - 1.0) * p_load
            qk[idx] -= (s - 1.0) * q_load
            try:
                sol = solver.solve(p=pk, q=qk, v_set=v)
                break
            except DivergenceError:
                reductions += 1
                s = 1.0 + 0.5 * (s - 1.0)
        else:
            raise GenerationError(f"extreme scenario {k} did not converge even at scale {s:.3f}")
        out_p[k], out_q[k], out_v[k] = pk, qk, v
        out_x[k] = sol.state
        scales[k] = s
    return ExtremeScenarios(out_p, out_q, out_v, scales, out_x, reductions)
