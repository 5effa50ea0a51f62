"""Estimation error metrics, per-hop profiles and total vector error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pmuse.netmodel import NetworkCase, multi_source_hops


@dataclass(frozen=True)
class MetricsReport:
    mag_mape: float  # percent
    ang_mae: float  # radians
    rmse: float
    bus_ids: tuple[int, ...] = ()
    per_bus_mape: np.ndarray = field(default_factory=lambda: np.zeros(0))
    per_bus_mae: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tve: dict | None = None

    def summary(self) -> dict:
        out = {"mag_mape_pct": self.mag_mape, "ang_mae_rad": self.ang_mae, "rmse": self.rmse}
        if self.tve:
            out.update({f"input_tve_{k}": v for k, v in self.tve.items()})
        return out


def _split(a: np.ndarray, n: int):
    return a[:, :n], a[:, n:]


def metrics(estimates, truth, bus_ids=None) -> MetricsReport:
    """Magnitude MAPE (%), angle MAE (rad) and RMSE over all outputs.

    Columns are all bus magnitudes followed by all bus angles.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    if est.shape[1] % 2:
        raise ValueError("state vectors must have an even length (magnitudes then angles)")
    n = est.shape[1] // 2
    vm_e, va_e = _split(est, n)
    vm_t, va_t = _split(tru, n)
    if np.any(vm_t <= 0):
        raise ValueError("true magnitudes must be positive")
    pct = np.abs(vm_e - vm_t) / vm_t * 100.0
    ang = np.abs(va_e - va_t)
    return MetricsReport(
        mag_mape=float(pct.mean()),
        ang_mae=float(ang.mean()),
        rmse=float(np.sqrt(np.mean((est - tru) ** 2))),
        bus_ids=tuple(bus_ids) if bus_ids is not None else tuple(range(1, n + 1)),
        per_bus_mape=pct.mean(axis=0),
        per_bus_mae=ang.mean(axis=0),
    )


def tve(measured, true) -> np.ndarray | float:
    """Total vector error |X_meas - X_true| / |X_true| of complex phasors."""
    m = np.asarray(measured, dtype=complex)
    t = np.asarray(true, dtype=complex)
    mag = np.abs(t)
    if np.any(mag == 0):
        raise ValueError("true phasor must be non-zero")
    out = np.abs(m - t) / mag
    return float(out) if out.ndim == 0 else out


def tve_summary(z_noisy: np.ndarray, z_clean: np.ndarray) -> dict:
    """Distribution of per-phasor TVE between noisy and clean polar features."""
    to_c = lambda f: f[:, 0::2] * np.exp(1j * f[:, 1::2])  # noqa: E731
    clean = to_c(np.atleast_2d(z_clean))
    ok = np.abs(clean) > 0
    vals = tve(to_c(np.atleast_2d(z_noisy))[ok], clean[ok])
    return {
        "mean": float(np.mean(vals)),
        "p50": float(np.percentile(vals, 50)),
        "p95": float(np.percentile(vals, 95)),
        "max": float(np.max(vals)),
    }


@dataclass(frozen=True)
class HopRow:
    hops: int
    n_buses: int
    mag_mape: float
    ang_mae: float


def hop_profile(estimates, truth, pmu_buses, case: NetworkCase) -> list[HopRow]:
    """Metrics bucketed by each bus's minimum hop distance to a PMU bus."""
    rep = metrics(estimates, truth, case.bus_ids)
    hops = multi_source_hops(case, pmu_buses)
    buckets: dict[int, list[int]] = {}
    for i, b in enumerate(case.bus_ids):
        if b in hops:
            buckets.setdefault(hops[b], []).append(i)
    return [
        HopRow(h, len(ix), float(rep.per_bus_mape[ix].mean()), float(rep.per_bus_mae[ix].mean()))
        for h, ix in sorted(buckets.items())
    ]
