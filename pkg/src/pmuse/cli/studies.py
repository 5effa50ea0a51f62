"""Experiment drivers shared by the CLI and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from pmuse.bddc import BddcConfig, BddcPipeline, WaldStats, learn_stats, wald_mask
from pmuse.cli.metrics import MetricsReport, metrics
from pmuse.mlp import FineTuneOptions, MlpConfig, MlpModel, fine_tune, train
from pmuse.netmodel import NetworkCase, PmuPlacement, apply_branch_outage, feature_map, find_branch
from pmuse.powerflow import MeasurementModel
from pmuse.sampler import (
    Dataset,
    InjectionModel,
    NoiseModel,
    apply_noise,
    build_dataset,
    dataset_from_states,
    inject_bad_data,
    make_extreme_scenarios,
)


def evaluate(model: MlpModel, z: np.ndarray, x_true: np.ndarray, bus_ids=None) -> MetricsReport:
    return metrics(model.predict(z), x_true, bus_ids)


def nocdb_rows(dataset: Dataset) -> np.ndarray:
    """Training plus validation features (noisy): the correction database."""
    return np.concatenate([dataset.train.z_noisy, dataset.val.z_noisy])


# --- bad-data sweeps ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    eta: float
    k: float
    mode: str
    mag_mape: float
    ang_mae: float


def correct_rows(z: np.ndarray, mode: str, stats: WaldStats, pipeline: BddcPipeline | None, alpha: float):
    if mode == "none":
        return z
    if mode == "mean":
        flags = wald_mask(z, stats, alpha)
        return np.where(flags, stats.mu, z)
    return pipeline.correct_batch(z)


def bddc_sweep(model: MlpModel, dataset: Dataset, etas, ks, seed: int = 0, alpha: float = 0.05,
               modes=("none", "mean", "noc"), n_test: int | None = None) -> list[SweepRow]:
    """Estimator error on the corrupted test split for every (eta, k, mode).

    Wald statistics come from the noisy training split; the correction
    database is training plus validation rows. The extreme-scenario filter
    is off here because bad data is spread over every PMU.
    """
    stats = learn_stats(dataset.train.z_noisy, dataset.feature_names)
    pipe = BddcPipeline(stats, nocdb_rows(dataset), config=BddcConfig(alpha=alpha, esf_enabled=False))
    test = dataset.test
    z0, x0 = test.z_noisy[:n_test], test.x_true[:n_test]
    rows = []
    for i, eta in enumerate(etas):
        for j, k in enumerate(ks):
            zb, _ = inject_bad_data(z0, eta, k, stats, [seed, i, j])
            for mode in modes:
                rep = evaluate(model, correct_rows(zb, mode, stats, pipe, alpha), x0)
                rows.append(SweepRow(float(eta), float(k), mode, rep.mag_mape, rep.ang_mae))
    return rows


# --- extreme scenarios with bad data ---------------------------------------------

@dataclass(frozen=True)
class ExtremeRow:
    method: str
    mag_mape_mean: float
    mag_mape_std: float
    ang_mae_mean: float
    ang_mae_std: float


@dataclass
class ExtremeStudy:
    rows: list[ExtremeRow]
    flagged_pmus: dict = field(default_factory=dict)
    suppressed_fraction: float = 0.0
    reductions: int = 0


def extreme_study(model: MlpModel, dataset: Dataset, case: NetworkCase, placement: PmuPlacement,
                  injection: InjectionModel, noise: NoiseModel, stressed=(8, 10), bad_pmus=(68, 81),
                  count: int = 1000, scale_range=(2.0, 4.0), k: float = 3.0, seed: int = 0,
                  alpha: float = 0.05) -> ExtremeStudy:
    """Stressed-load scenarios plus bad data at distant PMUs, three ways.

    Every feature of each PMU in ``bad_pmus`` is pushed to mu0 +- k sigma0.
    Per-scenario errors are summarised by mean and standard deviation.
    """
    ext = make_extreme_scenarios(case, stressed, scale_range, count, seed, model=injection)
    eds = dataset_from_states(case, placement, ext.states, noise, seed + 1)
    stats = learn_stats(dataset.train.z_noisy, dataset.feature_names)
    z = eds.z_noisy.copy()
    cols = np.concatenate([placement.features_of_bus(b) for b in bad_pmus]).astype(int)
    rng = np.random.default_rng([seed, 2])
    sign = np.where(rng.random((len(z), len(cols))) < 0.5, -1.0, 1.0)
    z[:, cols] = stats.mu[cols] + sign * k * stats.sigma[cols]

    db = nocdb_rows(dataset)
    with_esf = BddcPipeline(stats, db, placement, case, BddcConfig(alpha=alpha, esf_enabled=True))
    without = BddcPipeline(stats, db, config=BddcConfig(alpha=alpha, esf_enabled=False))
    owner = np.array([f.bus for f in placement.feature_schema])
    flagged = {b: 0 for b in placement.pmu_buses}
    suppressed = 0
    z_esf, z_plain = np.empty_like(z), np.empty_like(z)
    for i, row in enumerate(z):
        r = with_esf.process(row)
        z_esf[i] = r.corrected
        suppressed += r.suppressed
        for b in set(owner[r.ibfs].tolist()):
            flagged[b] += 1
        z_plain[i] = without.process(row).corrected

    out = []
    for name, zz in (("no BDDC", z), ("BDDC without ESF", z_plain), ("BDDC with ESF", z_esf)):
        est = model.predict(zz)
        n = case.n_bus
        t = ext.states
        mape = np.mean(np.abs(est[:, :n] - t[:, :n]) / t[:, :n], axis=1) * 100
        mae = np.mean(np.abs(est[:, n:] - t[:, n:]), axis=1)
        out.append(ExtremeRow(name, float(mape.mean()), float(mape.std()), float(mae.mean()), float(mae.std())))
    return ExtremeStudy(out, {b: c / len(z) for b, c in flagged.items()}, suppressed / len(z), ext.reductions)


# --- streaming replay ----------------------------------------------------------------

@dataclass(frozen=True)
class StreamReport:
    latencies_ms: np.ndarray
    frame_budget_ms: float
    metrics: MetricsReport | None = None

    @property
    def p50(self) -> float:
        return float(np.percentile(self.latencies_ms, 50))

    @property
    def p95(self) -> float:
        return float(np.percentile(self.latencies_ms, 95))

    @property
    def max(self) -> float:
        return float(self.latencies_ms.max())

    @property
    def overruns(self) -> int:
        return int(np.sum(self.latencies_ms > self.frame_budget_ms))

    def summary(self) -> dict:
        out = {"frames": len(self.latencies_ms), "p50_ms": self.p50, "p95_ms": self.p95,
               "max_ms": self.max, "overruns": self.overruns, "budget_ms": self.frame_budget_ms}
        if self.metrics is not None:
            out.update(self.metrics.summary())
        return out


def stream_replay(z_frames: np.ndarray, model: MlpModel, pipeline: BddcPipeline | None,
                  frame_interval: float = 0.033, x_true: np.ndarray | None = None,
                  outputs: bool = False):
    """Feed frames one at a time through correction and inference, timing each.

    Frames are processed back to back; the report counts frames whose
    processing exceeded the frame interval.
    """
    frames = np.atleast_2d(z_frames)
    lat = np.empty(len(frames))
    est = np.empty((len(frames), model.n_outputs))
    for i, z in enumerate(frames):
        t0 = time.perf_counter()
        zc = pipeline.process(z).corrected if pipeline is not None else z
        est[i] = model.predict(zc)
        lat[i] = (time.perf_counter() - t0) * 1e3
    rep = StreamReport(lat, frame_interval * 1e3, metrics(est, x_true) if x_true is not None else None)
    return (rep, est) if outputs else rep


# --- database size study -----------------------------------------------------------

@dataclass(frozen=True)
class DbSizeRow:
    size: int
    mag_mape: float
    ang_mae: float
    epochs: int


def database_size_study(case: NetworkCase, placement, injection: InjectionModel, noise: NoiseModel,
                        sizes, seed: int, config: MlpConfig, n_test: int = 2000,
                        val_fraction: float = 0.25) -> list[DbSizeRow]:
    """Train one model per database size (train + validation rows); shared test set."""
    sizes = sorted({int(s) for s in sizes})
    if not sizes or sizes[0] < 4:
        raise ValueError("database sizes must be at least 4")
    biggest = sizes[-1]
    full = build_dataset(case, placement, injection, biggest + n_test, noise, seed,
                         (biggest, 0, n_test))
    rows = []
    for s in sizes:
        n_val = max(1, int(round(s * val_fraction)))
        n_tr = s - n_val
        ds = Dataset(
            np.concatenate([full.z_clean[:s], full.test.z_clean]),
            np.concatenate([full.z_noisy[:s], full.test.z_noisy]),
            np.concatenate([full.x_true[:s], full.test.x_true]),
            full.feature_names, full.state_names, full.topology_id, seed, (n_tr, n_val, n_test),
        )
        model, rep = train(ds, config)
        m = evaluate(model, ds.test.z_noisy, ds.test.x_true)
        rows.append(DbSizeRow(s, m.mag_mape, m.ang_mae, rep.epochs_run))
    return rows


# --- topology change -----------------------------------------------------------------

@dataclass(frozen=True)
class TransferResult:
    topology_id: str
    stale: MetricsReport
    tuned: MetricsReport
    fine_tune_seconds: float
    removed_features: tuple[str, ...]
    model: MlpModel | None = None


def outage_case(case: NetworkCase, a: int, b: int) -> NetworkCase:
    return apply_branch_outage(case, find_branch(case, a, b))


def transfer_study(model: MlpModel, case: NetworkCase, pmu_buses, line: tuple[int, int],
                   injection: InjectionModel, noise: NoiseModel, seed: int,
                   options: FineTuneOptions | None = None, n_val: int = 500, n_test: int = 2000,
                   keep_model: bool = False) -> TransferResult:
    """Stale versus fine-tuned model on a single-line outage.

    The stale model keeps its original inputs; a PMU channel on the opened
    line reads zero. The fine-tuned model uses the regenerated schema, which
    drops such channels.
    """
    opts = options or FineTuneOptions()
    new_case = outage_case(case, *line)
    new_pl = feature_map(new_case, pmu_buses)
    ds = build_dataset(new_case, new_pl, injection, opts.samples + n_val + n_test, noise, seed,
                       (opts.samples, n_val, n_test))
    old_pl = feature_map(case, pmu_buses)
    n = case.n_bus
    x = ds.test.x_true
    v = x[:, :n] * np.exp(1j * x[:, n:])
    z_old = MeasurementModel(new_case, old_pl, allow_open=True).features(v)
    z_old = apply_noise(z_old, old_pl.angle_mask(), noise, [seed, 3])
    stale = evaluate(model, z_old, x, case.bus_ids)
    t0 = time.perf_counter()
    tuned_model, _ = fine_tune(model, ds, opts)
    secs = time.perf_counter() - t0
    tuned = evaluate(tuned_model, ds.test.z_noisy, x, case.bus_ids)
    removed = tuple(sorted(set(old_pl.names) - set(new_pl.names)))
    return TransferResult(new_case.topology_id, stale, tuned, secs, removed, tuned_model if keep_model else None)
