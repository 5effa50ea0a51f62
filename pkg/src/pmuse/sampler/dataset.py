"""Scenario datasets: generation through power flow, splits and CSV persistence."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pmuse.errors import DivergenceError, GenerationError, SchemaError
from pmuse.netmodel import NetworkCase, PmuPlacement, feature_map, state_names
from pmuse.powerflow import MeasurementModel, PfOptions, PowerFlowSolver
from pmuse.sampler.injection import InjectionMapper, InjectionModel, row_rng
from pmuse.sampler.noise import NoiseModel, apply_noise

MAX_FAILURE_RATE = 0.10
MAX_ATTEMPTS_PER_ROW = 50


@dataclass(frozen=True)
class Split:
    z_clean: np.ndarray
    z_noisy: np.ndarray
    x_true: np.ndarray

    def __len__(self):
        return len(self.x_true)


@dataclass
class Dataset:
    """Clean and noisy PMU features with the generating states.

    ``x_true`` columns are all bus magnitudes followed by all bus angles.
    Rows are ordered train, validation, test.
    """

    z_clean: np.ndarray
    z_noisy: np.ndarray
    x_true: np.ndarray
    feature_names: list[str]
    state_names: list[str]
    topology_id: str = "base"
    seed: int = 0
    splits: tuple[int, int, int] = (0, 0, 0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.splits = tuple(int(s) for s in self.splits)
        n = len(self.x_true)
        if not (len(self.z_clean) == len(self.z_noisy) == n):
            raise SchemaError("row counts differ between feature and state matrices")
        if sum(self.splits) != n:
            raise SchemaError(f"splits {self.splits} do not sum to {n} rows")
        if self.z_clean.shape[1] != len(self.feature_names) or self.z_noisy.shape[1] != len(self.feature_names):
            raise SchemaError("feature matrix width does not match feature names")
        if self.x_true.shape[1] != len(self.state_names):
            raise SchemaError("state matrix width does not match state names")
        for m in (self.z_clean, self.z_noisy, self.x_true):
            if not np.all(np.isfinite(m)):
                raise SchemaError("dataset contains non-finite values")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _rows(self, name: str) -> slice:
        a, b, _ = self.splits
        bounds = {"train": (0, a), "val": (a, a + b), "test": (a + b, sum(self.splits))}
        try:
            lo, hi = bounds[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None
        return slice(lo, hi)

    def split(self, name: str) -> Split:
        r = self._rows(name)
        return Split(self.z_clean[r], self.z_noisy[r], self.x_true[r])

    @property
    def train(self) -> Split:
        return self.split("train")

    @property
    def val(self) -> Split:
        return self.split("val")

    @property
    def test(self) -> Split:
        return self.split("test")

    def subset(self, n_train: int, n_val: int | None = None, n_test: int | None = None) -> "Dataset":
        """First rows of each split, e.g. a small fine-tuning set."""
        parts = []
        for name, n in (("train", n_train), ("val", n_val), ("test", n_test)):
            s = self.split(name)
            n = len(s) if n is None else min(n, len(s))
            parts.append((s, n))
        cat = lambda attr: np.concatenate([getattr(s, attr)[:n] for s, n in parts])  # noqa: E731
        return Dataset(
            cat("z_clean"), cat("z_noisy"), cat("x_true"), list(self.feature_names), list(self.state_names),
            self.topology_id, self.seed, tuple(n for _, n in parts), dict(self.meta),
        )


# --- generation ---------------------------------------------------------------

class _RowSolver:
    """Picklable worker state: solves rows of a scenario block."""

    def __init__(self, case, placement, model, seed, pf_options):
        self.case = case
        self.placement = placement
        self.model = model
        self.seed = seed
        self.pf_options = pf_options

    def __call__(self, rows):
        solver = PowerFlowSolver(self.case, self.pf_options)
        meas = MeasurementModel(self.case, self.placement)
        mapper = InjectionMapper(self.case, self.model.channels)
        n = self.case.n_bus
        xs = np.empty((len(rows), 2 * n))
        zs = np.empty((len(rows), self.placement.n_features))
        inj = np.empty((len(rows), len(self.model.channels)))
        failures = 0
        for k, row in enumerate(rows):
            for attempt in range(MAX_ATTEMPTS_PER_ROW):
                draw = self.model.draw_row(row_rng(self.seed, row, attempt))
                p, q, v = mapper(draw)
                try:
                    sol = solver.solve(p=p, q=q, v_set=v)
                    break
                except DivergenceError:
                    failures += 1
            else:
                raise GenerationError(f"row {row}: no converged scenario in {MAX_ATTEMPTS_PER_ROW} draws")
            xs[k] = sol.state
            zs[k] = meas.features(sol.v)[0]
            inj[k] = draw
        return xs, zs, inj, failures


def _chunks(n: int, parts: int):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [list(range(bounds[i], bounds[i + 1])) for i in range(parts) if bounds[i + 1] > bounds[i]]


def build_dataset(
    case: NetworkCase,
    placement,
    model: InjectionModel,
    F: int,
    noise: NoiseModel,
    seed: int,
    splits=None,
    workers: int = 1,
    pf_options: PfOptions | None = None,
    keep_injections: bool = False,
) -> Dataset:
    """Sample F operating points, solve each, and record PMU features and states.

    Non-convergent draws are resampled on the same row stream. The result
    does not depend on ``workers``.
    """
    if F < 1:
        raise ValueError("F must be >= 1")
    splits = tuple(splits) if splits is not None else (F, 0, 0)
    if len(splits) != 3 or min(splits) < 0 or sum(splits) > F:
        raise ValueError(f"invalid splits {splits} for F={F}")
    if sum(splits) < F:
        splits = (splits[0], splits[1], F - splits[0] - splits[1])
    if not isinstance(placement, PmuPlacement) or not placement.feature_schema:
        placement = feature_map(case, placement)

    job = _RowSolver(case, placement, model, seed, pf_options)
    if workers > 1 and F >= 2 * workers:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, _chunks(F, workers)))
    else:
        parts = [job(list(range(F)))]
    x = np.concatenate([p[0] for p in parts])
    z = np.concatenate([p[1] for p in parts])
    failures = sum(p[3] for p in parts)
    rate = failures / (F + failures)
    if rate > MAX_FAILURE_RATE:
        raise GenerationError(
            f"{failures} of {F + failures} sampled scenarios failed to converge ({rate:.1%}); "
            "the injection model produces infeasible operating points"
        )
    z_noisy = apply_noise(z, placement.angle_mask(), noise, [seed, 0x6E6F6973])
    meta = {
        "failures": int(failures),
        "noise": noise.to_dict(),
        "pmu_buses": list(placement.pmu_buses),
        "case": case.name,
    }
    ds = Dataset(z, z_noisy, x, placement.names, state_names(case), case.topology_id, seed, splits, meta)
    if keep_injections:
        ds.meta["injections"] = np.concatenate([p[2] for p in parts])
    return ds


def dataset_from_states(case: NetworkCase, placement, states: np.ndarray, noise: NoiseModel, seed: int,
                        splits=None) -> Dataset:
    """Dataset for externally solved operating points (rows of ``states``)."""
    if not isinstance(placement, PmuPlacement) or not placement.feature_schema:
        placement = feature_map(case, placement)
    states = np.atleast_2d(states)
    n = case.n_bus
    v = states[:, :n] * np.exp(1j * states[:, n:])
    z = MeasurementModel(case, placement).features(v)
    z_noisy = apply_noise(z, placement.angle_mask(), noise, [seed, 0x6E6F6973])
    splits = splits or (0, 0, len(states))
    return Dataset(z, z_noisy, states, placement.names, state_names(case), case.topology_id, seed, splits,
                   {"noise": noise.to_dict(), "pmu_buses": list(placement.pmu_buses), "case": case.name})


# --- persistence ----------------------------------------------------------------

def _write_csv(path: Path, names, matrix):
    header = ",".join(names)
    np.savetxt(path, matrix, delimiter=",", header=header, comments="", fmt="%.17g")


def _read_csv(path: Path):
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(names))
    return names, data


def save_dataset(ds: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "z_clean.csv", ds.feature_names, ds.z_clean)
    _write_csv(d / "z_noisy.csv", ds.feature_names, ds.z_noisy)
    _write_csv(d / "x_true.csv", ds.state_names, ds.x_true)
    meta = {k: v for k, v in ds.meta.items() if k != "injections"}
    meta.update(
        schema=ds.feature_names,
        seed=ds.seed,
        splits=list(ds.splits),
        topology_id=ds.topology_id,
    )
    (d / "meta.json").write_text(json.dumps(meta, indent=1))
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except FileNotFoundError:
        raise SchemaError(f"{d} is not a dataset directory (meta.json missing)") from None
    names, zc = _read_csv(d / "z_clean.csv")
    names_n, zn = _read_csv(d / "z_noisy.csv")
    snames, x = _read_csv(d / "x_true.csv")
    if names != meta.get("schema", names) or names_n != names:
        raise SchemaError("CSV headers disagree with the schema in meta.json")
    extra = {k: v for k, v in meta.items() if k not in ("schema", "seed", "splits", "topology_id")}
    return Dataset(zc, zn, x, names, snames, meta.get("topology_id", "base"), int(meta.get("seed", 0)),
                   tuple(meta["splits"]), extra)
