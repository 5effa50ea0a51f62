"""PMU-only linear state estimator in rectangular coordinates.

With the state written as ``[Re V; Im V]`` every voltage and branch
current phasor is an exact linear function of the state, so weighted
least squares solves it in one step when the placement makes ``H`` full
column rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from pmuse.errors import UnobservableError
from pmuse.netmodel import NetworkCase, PmuPlacement, feature_map

RANK_RTOL = 1e-8
DENSE_STATES = 600


@dataclass(frozen=True)
class LinearMeasurementModel:
    """Rows come in (real, imaginary) pairs, one pair per measured phasor."""

    H: sp.csr_matrix
    weights: np.ndarray
    names: tuple[str, ...]
    n_bus: int
    slack_index: int

    @property
    def n_states(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class ObservabilityReport:
    observable: bool
    rank: int
    n_states: int

    @property
    def deficiency(self) -> int:
        return self.n_states - self.rank

    def __bool__(self):
        return self.observable


def build_h(case: NetworkCase, placement, weights=None) -> LinearMeasurementModel:
    """Rectangular measurement matrix for a placement's voltage and current phasors."""
    if not isinstance(placement, PmuPlacement) or not placement.feature_schema:
        placement = feature_map(case, placement)
    idx = case.bus_index
    n = case.n_bus
    rows, cols, vals = [], [], []
    names = []

    def put(k, bus_i, a):
        # phasor k gets a * V_i: real row 2k, imaginary row 2k+1
        rows.extend([2 * k, 2 * k, 2 * k + 1, 2 * k + 1])
        cols.extend([bus_i, n + bus_i, bus_i, n + bus_i])
        vals.extend([a.real, -a.imag, a.imag, a.real])

    phasors = placement.feature_schema[::2]
    for k, f in enumerate(phasors):
        names.append(f.phasor)
        at = idx[f.bus]
        if f.branch is None:
            put(k, at, 1.0 + 0j)
            continue
        br = case.branch(f.branch)
        other = idx[br.to_bus if br.from_bus == f.bus else br.from_bus]
        ys = 1.0 / br.series_impedance
        put(k, at, ys + 0.5j * br.shunt_susceptance_total)
        put(k, other, -ys)
    m = 2 * len(phasors)
    H = sp.csr_matrix((vals, (rows, cols)), shape=(m, 2 * n))
    H.sum_duplicates()
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (m,) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per rectangular measurement row")
    return LinearMeasurementModel(H, w, tuple(names), n, idx[case.slack_id])


def check_observable(model: LinearMeasurementModel) -> ObservabilityReport:
    """Numerical rank of H by SVD, tolerance 1e-8 relative to the largest singular value."""
    n_states = model.n_states
    if model.H.shape[0] == 0:
        return ObservabilityReport(False, 0, n_states)
    s = np.linalg.svd(model.H.toarray(), compute_uv=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return ObservabilityReport(rank == n_states, rank, n_states)


def polar_to_rect(features: np.ndarray) -> np.ndarray:
    """(mag, ang) feature pairs -> interleaved (real, imag) measurement rows."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    out = np.empty_like(f)
    out[:, 0::2] = f[:, 0::2] * np.cos(f[:, 1::2])
    out[:, 1::2] = f[:, 0::2] * np.sin(f[:, 1::2])
    return out if np.ndim(features) > 1 else out[0]


def solve_lse(model: LinearMeasurementModel, z_rect, check: bool = True) -> np.ndarray:
    """Weighted least squares state, returned as ``[|V|; angle]`` per bus.

    Angles are rebased so the slack bus angle is zero. ``z_rect`` may hold
    one measurement vector or one per row.
    """
    if check:
        rep = check_observable(model)
        if not rep.observable:
            raise UnobservableError(
                f"measurement model is rank deficient (rank {rep.rank} of {rep.n_states})"
            )
    z = np.asarray(z_rect, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.shape[1] != model.H.shape[0]:
        raise ValueError(f"expected {model.H.shape[0]} measurement rows, got {z2.shape[1]}")
    sw = np.sqrt(model.weights)
    if model.n_states <= DENSE_STATES:
        A = model.H.toarray() * sw[:, None]
        x, *_ = np.linalg.lstsq(A, (z2 * sw).T, rcond=None)
        x = x.T
    else:
        Hw = sp.diags(sw) @ model.H
        gain = splu((Hw.T @ Hw).tocsc())
        x = gain.solve(np.asarray(Hw.T @ (z2 * sw).T)).T
    n = model.n_bus
    v = x[:, :n] + 1j * x[:, n:]
    v = v * np.exp(-1j * np.angle(v[:, [model.slack_index]]))
    out = np.concatenate([np.abs(v), np.angle(v)], axis=1)
    return out[0] if single else out
