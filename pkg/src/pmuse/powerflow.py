"""Newton-Raphson AC power flow (polar form) and PMU measurement synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from pmuse.errors import CaseValidationError, DivergenceError
from pmuse.netmodel import NetworkCase, PmuPlacement, build_ybus
from pmuse.netmodel.topology import require_connected


@dataclass(frozen=True)
class PfOptions:
    tolerance: float = 1e-8
    max_iterations: int = 20
    flat_start: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class PowerFlowSolution:
    v_mag: np.ndarray
    v_ang: np.ndarray
    iterations: int
    max_mismatch: float
    trajectory: tuple[float, ...] = field(default=(), repr=False)

    @property
    def v(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)

    @property
    def state(self) -> np.ndarray:
        """Magnitudes followed by angles, the layout of an estimator target."""
        return np.concatenate([self.v_mag, self.v_ang])


DENSE_LIMIT = 300


class PowerFlowSolver:
    """Reusable solver for one topology; injections vary per call.

    Bus order, and therefore the order of ``p``/``q``/``v_set`` arrays,
    follows ``case.buses``.
    """

    def __init__(self, case: NetworkCase, options: PfOptions | None = None):
        require_connected(case)
        self.case = case
        self.options = options or PfOptions()
        self.ybus = build_ybus(case, sparse=True).tocsr()
        # dense kernels win below a few hundred buses
        self.dense_ybus = self.ybus.toarray() if case.n_bus <= DENSE_LIMIT else None
        kinds = np.array([b.kind for b in case.buses])
        self.ref = np.flatnonzero(kinds == "slack")
        self.pv = np.flatnonzero(kinds == "PV")
        self.pq = np.flatnonzero(kinds == "PQ")
        self.pvpq = np.concatenate([self.pv, self.pq])
        self.p_base = np.array([b.p_inj for b in case.buses])
        self.q_base = np.array([b.q_inj for b in case.buses])
        self.v_base = np.array([b.v_setpoint for b in case.buses])

    def mismatch(self, v: np.ndarray, s_spec: np.ndarray) -> np.ndarray:
        ybus = self.ybus if self.dense_ybus is None else self.dense_ybus
        s_calc = v * np.conj(ybus @ v)
        ds = s_calc - s_spec
        return np.concatenate([ds.real[self.pvpq], ds.imag[self.pq]])

    def jacobian(self, v: np.ndarray):
        """Full polar Jacobian of the mismatch, rows [P(pv,pq); Q(pq)]."""
        if self.dense_ybus is not None:
            ybus = self.dense_ybus
            ibus = ybus @ v
            vn = v / np.abs(v)
            ds_dva = 1j * v[:, None] * np.conj(np.diag(ibus) - ybus * v[None, :])
            ds_dvm = v[:, None] * np.conj(ybus * vn[None, :]) + np.diag(np.conj(ibus) * vn)
            rows, cols = self.pvpq, self.pq
            return np.block([
                [ds_dva[np.ix_(rows, rows)].real, ds_dvm[np.ix_(rows, cols)].real],
                [ds_dva[np.ix_(cols, rows)].imag, ds_dvm[np.ix_(cols, cols)].imag],
            ])
        ybus = self.ybus
        ibus = ybus @ v
        diag_v = sp.diags(v)
        diag_i = sp.diags(ibus)
        diag_vn = sp.diags(v / np.abs(v))
        ds_dva = sp.csr_matrix(1j * diag_v @ np.conj(diag_i - ybus @ diag_v))
        ds_dvm = sp.csr_matrix(diag_v @ np.conj(ybus @ diag_vn) + np.conj(diag_i) @ diag_vn)
        j11 = ds_dva[self.pvpq][:, self.pvpq].real
        j12 = ds_dvm[self.pvpq][:, self.pq].real
        j21 = ds_dva[self.pq][:, self.pvpq].imag
        j22 = ds_dvm[self.pq][:, self.pq].imag
        return sp.vstack([sp.hstack([j11, j12]), sp.hstack([j21, j22])], format="csc")

    def _newton_step(self, v, f):
        jac = self.jacobian(v)
        if self.dense_ybus is not None:
            return np.linalg.solve(jac, -f)
        return splu(jac).solve(-f)

    def solve(self, p=None, q=None, v_set=None, initial: PowerFlowSolution | None = None) -> PowerFlowSolution:
        opts = self.options
        p = self.p_base if p is None else np.asarray(p, dtype=float)
        q = self.q_base if q is None else np.asarray(q, dtype=float)
        v_set = self.v_base if v_set is None else np.asarray(v_set, dtype=float)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q)) and np.all(np.isfinite(v_set))):
            raise CaseValidationError("non-finite injections")
        s_spec = p + 1j * q

        if initial is not None and not opts.flat_start:
            vm = np.array(initial.v_mag, dtype=float)
            va = np.array(initial.v_ang, dtype=float)
        else:
            vm = np.ones(len(p))
            va = np.zeros(len(p))
        gen = np.concatenate([self.ref, self.pv])
        vm[gen] = v_set[gen]
        va[self.ref] = 0.0

        npvpq = len(self.pvpq)
        trajectory = []
        for it in range(1, opts.max_iterations + 1):
            v = vm * np.exp(1j * va)
            f = self.mismatch(v, s_spec)
            norm = float(np.max(np.abs(f))) if f.size else 0.0
            trajectory.append(norm)
            if not np.isfinite(norm):
                break
            if norm < opts.tolerance:
                return PowerFlowSolution(vm, va, it, norm, tuple(trajectory))
            if it == opts.max_iterations:
                break
            try:
                dx = self._newton_step(v, f)
            except (RuntimeError, np.linalg.LinAlgError) as exc:  # singular Jacobian
                raise DivergenceError(f"singular Jacobian: {exc}", norm, trajectory) from exc
            va[self.pvpq] += dx[:npvpq]
            vm[self.pq] += dx[npvpq:]
            if np.any(vm[self.pq] <= 0):
                break
        last = trajectory[-1] if trajectory else float("nan")
        raise DivergenceError(
            f"power flow did not converge in {opts.max_iterations} iterations (mismatch {last:.3g})",
            last,
            trajectory,
        )


def solve_pf(case: NetworkCase, options: PfOptions | None = None, **kw) -> PowerFlowSolution:
    return PowerFlowSolver(case, options).solve(**kw)


# --- terminal and injection currents -----------------------------------------

def branch_current(solution: PowerFlowSolution, case: NetworkCase, branch_id: int, end: str = "from") -> complex:
    """Current entering the branch at the named terminal (pi model)."""
    br = case.branch(branch_id)
    if not br.in_service:
        raise CaseValidationError(f"branch {branch_id} is out of service")
    v = solution.v
    idx = case.bus_index
    vf, vt = v[idx[br.from_bus]], v[idx[br.to_bus]]
    ys = 1.0 / br.series_impedance
    ysh = 0.5j * br.shunt_susceptance_total
    if end == "from":
        return complex((vf - vt) * ys + ysh * vf)
    if end == "to":
        return complex((vt - vf) * ys + ysh * vt)
    raise ValueError("end must be 'from' or 'to'")


def injection_current(solution: PowerFlowSolution, case: NetworkCase, bus_id: int) -> complex:
    i = case.bus_index[case.bus(bus_id).id]
    ybus = build_ybus(case, sparse=True)
    return complex((ybus.getrow(i) @ solution.v)[0])


def injection_current_by_branches(solution: PowerFlowSolution, case: NetworkCase, bus_id: int) -> complex:
    """Same quantity as ``injection_current`` summed branch by branch."""
    bus = case.bus(bus_id)
    total = bus.shunt_admittance * solution.v[case.bus_index[bus_id]]
    for br in case.incident_branches(bus_id):
        total += branch_current(solution, case, br.id, "from" if br.from_bus == bus_id else "to")
    return complex(total)


# --- PMU measurement synthesis ------------------------------------------------

class MeasurementModel:
    """Vectorised map from complex bus voltages to PMU polar features."""

    def __init__(self, case: NetworkCase, placement: PmuPlacement, allow_open: bool = False):
        """``allow_open`` lets the schema name branches that are now open; their
        current channels then read zero (what a PMU on a dead line reports)."""
        idx = case.bus_index
        self.n_features = placement.n_features
        self.angle = placement.angle_mask()
        phasor_rows = placement.feature_schema[::2]
        self.at = np.array([idx[f.bus] for f in phasor_rows])
        self.other = np.zeros(len(phasor_rows), dtype=int)
        self.ys = np.zeros(len(phasor_rows), dtype=complex)
        self.ysh = np.zeros(len(phasor_rows), dtype=complex)
        self.is_current = np.zeros(len(phasor_rows), dtype=bool)
        for k, f in enumerate(phasor_rows):
            if f.branch is None:
                continue
            br = case.branch(f.branch)
            if not br.in_service:
                if allow_open:
                    self.other[k] = self.at[k]
                    self.is_current[k] = True
                    continue
                raise CaseValidationError(f"feature {f.name} refers to open branch {br.id}")
            far = br.to_bus if br.from_bus == f.bus else br.from_bus
            self.other[k] = idx[far]
            self.ys[k] = 1.0 / br.series_impedance
            self.ysh[k] = 0.5j * br.shunt_susceptance_total
            self.is_current[k] = True

    def phasors(self, v: np.ndarray) -> np.ndarray:
        """Complex phasors (rows = scenarios) in schema phasor order."""
        v = np.atleast_2d(v)
        va = v[:, self.at]
        vb = v[:, self.other]
        cur = (va - vb) * self.ys + self.ysh * va
        return np.where(self.is_current, cur, va)

    def features(self, v: np.ndarray) -> np.ndarray:
        ph = self.phasors(v)
        out = np.empty((ph.shape[0], 2 * ph.shape[1]))
        out[:, 0::2] = np.abs(ph)
        out[:, 1::2] = np.angle(ph)
        return out


def polar_to_complex(features: np.ndarray) -> np.ndarray:
    """Inverse of the (magnitude, angle) pairing used by ``MeasurementModel``."""
    features = np.atleast_2d(features)
    return features[:, 0::2] * np.exp(1j * features[:, 1::2])
