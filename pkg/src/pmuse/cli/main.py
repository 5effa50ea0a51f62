"""``pmuse`` command line. Exit codes: 0 success, 2 validation error, 3 numerical failure."""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import yaml

from pmuse import __version__

from pmuse.errors import (
    CaseValidationError,
    DivergenceError,
    GenerationError,
    ModelFormatError,
    PmuseError,
    QuadratureError,
    SchemaError,
    SingularCovarianceError,
    UnknownBusError,
    UnobservableError,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
VALIDATION_ERRORS = (CaseValidationError, SchemaError, ModelFormatError, UnknownBusError, UnobservableError,
                     FileNotFoundError, ValueError, KeyError, yaml.YAMLError)
NUMERICAL_ERRORS = (DivergenceError, GenerationError, SingularCovarianceError, QuadratureError,
                    ArithmeticError, np.linalg.LinAlgError)


def exit_code_for(exc: BaseException) -> int:
    # order matters: UnobservableError is an ArithmeticError but means a bad placement
    if isinstance(exc, VALIDATION_ERRORS):
        return EXIT_VALIDATION
    if isinstance(exc, NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    return 1


def guarded(fn):
    """Map library errors to exit codes with a one-line message on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (PmuseError, *VALIDATION_ERRORS, *NUMERICAL_ERRORS) as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(exit_code_for(exc))

    return wrapper


def parse_sets(values) -> dict:
    out = {}
    for item in values:
        if "=" not in item:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint="--set")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def common(fn):
    """Config file, seed, output directory and free-form overrides."""
    fn = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                      help="Override a config entry (dotted keys, YAML values).")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), help="Output directory.")(fn)
    fn = click.option("--seed", type=int, help="Master seed.")(fn)
    fn = click.option("--config", "-c", "config", type=click.Path(dir_okay=False),
                      help="YAML run configuration.")(fn)
    return fn


def load_config(config, seed=None, out=None, sets=(), **extra):
    from pmuse.cli.config import RunConfig

    over = parse_sets(sets)
    over.update({"seed": seed, "output": out})
    over.update(extra)
    return RunConfig.load(config, over)


def emit_json(doc: dict):
    click.echo(json.dumps(doc, indent=2, default=float))


def network(cfg):
    from pmuse.netmodel import feature_map

    case = cfg.load_case()
    return case, feature_map(case, cfg.pmu_buses(case))


def get_dataset(cfg, data_dir):
    from pmuse.sampler import build_dataset, load_dataset

    if data_dir:
        return load_dataset(data_dir)
    case, pl = network(cfg)
    return build_dataset(case, pl, cfg.injection_model(case), cfg.samples, cfg.noise_model(),
                         cfg.sub_seed("data"), cfg.splits, cfg.workers)


def get_model(path, case=None):
    from pmuse.mlp import load_model

    return load_model(path, case)


@click.group()
@click.version_option(version=__version__, prog_name="pmuse")
def main():
    """PMU-based state estimation toolkit."""


# --- case -------------------------------------------------------------------------------

@main.group()
def case():
    """Network case utilities."""


@case.command("validate")
@common
@click.option("--case", "case_path", help="Case file (JSON or MATPOWER .m); defaults to the config entry.")
@guarded
def case_validate(config, seed, out, sets, case_path):
    """Check structure and connectivity, solve the base power flow."""
    from pmuse.netmodel import enumerate_n1_topologies, is_connected
    from pmuse.powerflow import solve_pf

    cfg = load_config(config, seed, out, sets, **({"case": case_path} if case_path else {}))
    c = cfg.load_case()
    if not is_connected(c):
        raise CaseValidationError("case network is not connected")
    sol = solve_pf(c)
    vm = np.abs(sol.v)
    emit_json({
        "name": c.name, "buses": c.n_bus, "branches": len(c.branches), "slack": c.slack_id,
        "pf_iterations": sol.iterations, "pf_mismatch": sol.max_mismatch,
        "vm_min": float(vm.min()), "vm_max": float(vm.max()),
        "n1_non_islanding": len(enumerate_n1_topologies(c)),
    })


# --- data -------------------------------------------------------------------------------

@main.group()
def data():
    """Training data synthesis."""


@data.command("generate")
@common
@click.option("--samples", "-F", type=int, help="Number of operating points.")
@click.option("--workers", type=int, help="Worker processes (results do not depend on it).")
@guarded
def data_generate(config, seed, out, sets, samples, workers):
    """Sample injections, solve power flows, write feature and state CSVs."""
    from pmuse.cli.config import write_manifest
    from pmuse.cli.metrics import tve_summary
    from pmuse.sampler import save_dataset

    extra = {k: v for k, v in {"samples": samples, "workers": workers}.items() if v is not None}
    if samples is not None and not any(s.startswith("splits=") for s in sets):
        extra["splits"] = default_splits(samples)
    cfg = load_config(config, seed, out, sets, **extra)
    t0 = time.perf_counter()
    ds = get_dataset(cfg, None)
    path = save_dataset(ds, Path(cfg.output) / "dataset")
    info = {"rows": len(ds.x_true), "splits": list(ds.splits), "failures": ds.meta.get("failures", 0),
            "seconds": time.perf_counter() - t0, "input_tve": tve_summary(ds.z_noisy, ds.z_clean)}
    write_manifest(cfg.output, "data generate", cfg, {"dataset": str(path), **info})
    emit_json(info)


def default_splits(F: int) -> list[int]:
    n_test = max(1, F // 7 * 2)
    n_val = (F - n_test) // 4
    return [F - n_test - n_val, n_val, n_test]


# --- training ----------------------------------------------------------------------------

@main.command()
@common
@click.option("--data", "data_dir", type=click.Path(file_okay=False), help="Dataset directory.")
@click.option("--preset", "preset_name", help="MLP preset name.")
@click.option("--clean", is_flag=True, help="Train on noise-free features.")
@guarded
def train(config, seed, out, sets, data_dir, preset_name, clean):
    """Train the estimator and save it as versioned JSON."""
    from pmuse.cli.config import write_manifest
    from pmuse.mlp import save_model, train as fit_model

    extra = {"mlp.preset": preset_name} if preset_name else {}
    cfg = load_config(config, seed, out, list(sets) + [f"{k}={v}" for k, v in extra.items()])
    ds = get_dataset(cfg, data_dir)
    t0 = time.perf_counter()
    model, rep = fit_model(ds, cfg.mlp_config(), noisy=not clean)
    secs = time.perf_counter() - t0
    path = save_model(model, Path(cfg.output) / "model.json")
    from pmuse.cli.studies import evaluate

    m = evaluate(model, (ds.test.z_clean if clean else ds.test.z_noisy), ds.test.x_true)
    info = {"model": str(path), "train_seconds": secs, **rep.to_dict(), "test": m.summary()}
    write_manifest(cfg.output, "train", cfg, info)
    emit_json(info)


@main.command()
@common
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--outage", nargs=2, type=int, required=True, metavar="FROM TO",
              help="Open the line between these two buses.")
@click.option("--samples", type=int, default=2000, show_default=True)
@click.option("--epochs", type=int, default=90, show_default=True)
@guarded
def finetune(config, seed, out, sets, model_path, outage, samples, epochs):
    """Adapt a trained model to a single-line outage; report stale and tuned errors."""
    from pmuse.cli.config import write_manifest
    from pmuse.cli.studies import transfer_study
    from pmuse.mlp import FineTuneOptions, save_model

    cfg = load_config(config, seed, out, sets)
    c = cfg.load_case()
    model = get_model(model_path, c)
    opts = FineTuneOptions(samples=samples, epochs=epochs, seed=cfg.sub_seed("init"))
    res = transfer_study(model, c, cfg.pmu_buses(c), tuple(outage), cfg.injection_model(c), cfg.noise_model(),
                         cfg.sub_seed("data"), opts, keep_model=True)
    path = save_model(res.model, Path(cfg.output) / "model_finetuned.json")
    info = {"topology": res.topology_id, "model": str(path), "stale": res.stale.summary(),
            "finetuned": res.tuned.summary(), "fine_tune_seconds": res.fine_tune_seconds,
            "removed_features": list(res.removed_features)}
    write_manifest(cfg.output, "finetune", cfg, info)
    emit_json(info)


# --- inference and evaluation ----------------------------------------------------------

@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="CSV of feature rows with a header of feature names.")
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@guarded
def estimate(model_path, input_path, output_path):
    """Estimate bus voltages for each feature row of a CSV."""
    from pmuse.cli.plots import write_csv

    model = get_model(model_path)
    with open(input_path) as fh:
        names = fh.readline().strip().split(",")
    z = np.loadtxt(input_path, delimiter=",", skiprows=1, ndmin=2)
    if names != list(model.feature_names):
        missing = set(model.feature_names) - set(names)
        if missing:
            raise SchemaError(f"input lacks model features: {sorted(missing)[:5]}")
        z = z[:, [names.index(n) for n in model.feature_names]]
    est = model.predict(z)
    write_csv(output_path, model.target_names, est.tolist())
    click.echo(f"wrote {len(est)} estimates to {output_path}")


@main.command()
@common
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", type=click.Path(file_okay=False))
@guarded
def evaluate(config, seed, out, sets, model_path, data_dir):
    """Test-split metrics, per-bus breakdown and achieved input TVE."""
    from pmuse.cli.config import write_manifest
    from pmuse.cli.metrics import tve_summary
    from pmuse.cli.plots import write_csv
    from pmuse.cli.studies import evaluate as eval_model

    cfg = load_config(config, seed, out, sets)
    ds = get_dataset(cfg, data_dir)
    model = get_model(model_path)
    n = len(ds.state_names) // 2
    bus_ids = [int(s.split("bus")[1]) for s in ds.state_names[:n]]
    m = eval_model(model, ds.test.z_noisy, ds.test.x_true, bus_ids)
    out_dir = Path(cfg.output)
    write_csv(out_dir / "per_bus.csv", ["bus", "mag_mape_pct", "ang_mae_rad"],
              zip(m.bus_ids, m.per_bus_mape, m.per_bus_mae))
    info = {**m.summary(), "input_tve": tve_summary(ds.test.z_noisy, ds.test.z_clean)}
    write_csv(out_dir / "metrics.csv", ["metric", "value"],
              [(k, v) for k, v in info.items() if not isinstance(v, dict)])
    write_manifest(out_dir, "evaluate", cfg, info)
    emit_json(info)


@main.command("hop-profile")
@common
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", type=click.Path(file_okay=False))
@guarded
def hop_profile_cmd(config, seed, out, sets, model_path, data_dir):
    """Error by hop distance from the PMU buses (fig3_hops.csv and figure)."""
    from pmuse.cli.config import write_manifest
    from pmuse.cli.metrics import hop_profile
    from pmuse.cli.plots import hop_figure

    cfg = load_config(config, seed, out, sets)
    c = cfg.load_case()
    ds = get_dataset(cfg, data_dir)
    model = get_model(model_path, c)
    rows = hop_profile(model.predict(ds.test.z_noisy), ds.test.x_true, cfg.pmu_buses(c), c)
    paths = hop_figure(rows, cfg.output)
    write_manifest(cfg.output, "hop-profile", cfg, {"files": [str(p) for p in paths]})
    for r in rows:
        click.echo(f"hops={r.hops} buses={r.n_buses} mape={r.mag_mape:.4f}% mae={r.ang_mae:.5f} rad")


# --- bad data ----------------------------------------------------------------------------

@main.group()
def bddc():
    """Bad-data detection and correction."""


@bddc.command("simulate")
@common
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", type=click.Path(file_okay=False))
@click.option("--etas", default="0,0.1,0.2,0.3,0.4,0.5", show_default=True, help="Bad-data fractions.")
@click.option("--ks", default="3,4,5,6,7", show_default=True, help="Severities (multiples of sigma).")
@click.option("--sweep-k-eta", default=0.3, show_default=True, type=float)
@click.option("--test-rows", type=int, help="Limit the number of test rows.")
@click.option("--extreme/--no-extreme", default=False, help="Also run the stressed-load study.")
@click.option("--extreme-count", default=1000, show_default=True, type=int)
@guarded
def bddc_simulate(config, seed, out, sets, model_path, data_dir, etas, ks, sweep_k_eta, test_rows,
                  extreme, extreme_count):
    """Error tables versus bad-data fraction and severity (fig6/fig7 CSVs and figures)."""
    from pmuse.cli.config import write_manifest
    from pmuse.cli.plots import sweep_figures, write_csv
    from pmuse.cli.studies import bddc_sweep, extreme_study

    cfg = load_config(config, seed, out, sets)
    ds = get_dataset(cfg, data_dir)
    model = get_model(model_path)
    alpha = cfg.bddc_config().alpha
    s = cfg.sub_seed("bad-data")
    eta_list = [float(x) for x in etas.split(",")]
    k_list = [float(x) for x in ks.split(",")]
    eta_rows = bddc_sweep(model, ds, eta_list, [3.0], s, alpha, n_test=test_rows)
    k_rows = bddc_sweep(model, ds, [sweep_k_eta], k_list, s + 1, alpha, n_test=test_rows)
    paths = sweep_figures(eta_rows, k_rows, cfg.output)
    info = {"files": [str(p) for p in paths]}
    if extreme:
        c, pl = network(cfg)
        res = extreme_study(model, ds, c, pl, cfg.injection_model(c), cfg.noise_model(), count=extreme_count,
                            seed=cfg.sub_seed("extreme"), alpha=alpha)
        p = write_csv(Path(cfg.output) / "extreme.csv",
                      ["method", "mag_mape_mean", "mag_mape_std", "ang_mae_mean", "ang_mae_std"],
                      [(r.method, r.mag_mape_mean, r.mag_mape_std, r.ang_mae_mean, r.ang_mae_std)
                       for r in res.rows])
        info["files"].append(str(p))
        info["extreme_suppressed_fraction"] = res.suppressed_fraction
    write_manifest(cfg.output, "bddc simulate", cfg, info)
    for r in eta_rows + k_rows:
        click.echo(f"eta={r.eta:.2f} k={r.k:g} {r.mode:>4}: mape={r.mag_mape:.4f}% mae={r.ang_mae:.5f} rad")


# --- oracle and baseline ------------------------------------------------------------------

@main.command()
@click.option("--samples", "-F", default=10000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--labels", type=click.Choice(["bus2load", "literal"]), default="bus2load", show_default=True)
@click.option("--draws", type=click.Choice(["shared", "independent"]), default="shared", show_default=True)
@click.option("--out", "out", type=click.Path(file_okay=False), help="Directory for oracle.csv.")
@guarded
def oracle(samples, seed, labels, draws, out):
    """Five-case Gaussian conditional-mean study on the 3-bus example."""
    from pmuse.cli.plots import write_csv
    from pmuse.gauss_mmse import STUDY_CASES, ThreeBusReading, run_3bus_study

    res = run_3bus_study(samples, seed, ThreeBusReading(labels=labels, draws=draws))
    rows = [(c, " ".join(STUDY_CASES[c]) or "-", res.mae[c]) for c in sorted(res.mae)]
    if out:
        write_csv(Path(out) / "oracle.csv", ["case", "given", "mae_v3"], rows)
    click.echo(f"{'case':>4}  {'MAE |V3|':>10}  given")
    for c, given, mae in rows:
        click.echo(f"{c:>4}  {mae:10.3e}  {given}")
    for name, ok in res.ordering_checks().items():
        click.echo(f"ordering {name}: {'yes' if ok else 'no'}")


@main.command()
@common
@click.option("--placement", "placement_path", required=True, type=click.Path(dir_okay=False),
              help="JSON list of PMU bus ids.")
@click.option("--data", "data_dir", type=click.Path(file_okay=False),
              help="Dataset to estimate (clean features of the test split).")
@guarded
def lse(config, seed, out, sets, placement_path, data_dir):
    """Observability check and linear estimate for a PMU-only placement."""
    from pmuse.baseline_lse import build_h, check_observable, polar_to_rect, solve_lse
    from pmuse.cli.metrics import metrics
    from pmuse.netmodel import feature_map, load_placement

    cfg = load_config(config, seed, out, sets)
    c = cfg.load_case()
    pl = feature_map(c, load_placement(placement_path))
    model = build_h(c, pl)
    rep = check_observable(model)
    info = {"observable": rep.observable, "rank": rep.rank, "n_states": rep.n_states}
    if not rep.observable:
        emit_json(info)
        raise UnobservableError(f"placement leaves {rep.deficiency} state directions unobservable")
    if data_dir:
        from pmuse.sampler import load_dataset

        ds = load_dataset(data_dir)
        if list(ds.feature_names) != pl.names:
            raise SchemaError("dataset features do not match the placement")
        est = solve_lse(model, polar_to_rect(ds.test.z_noisy), check=False)
        info.update(metrics(est, ds.test.x_true).summary())
    emit_json(info)


# --- streaming and database size -----------------------------------------------------------

@main.command()
@common
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", type=click.Path(file_okay=False))
@click.option("--frames", type=int, default=1000, show_default=True)
@click.option("--bddc/--no-bddc", "use_bddc", default=True, show_default=True)
@click.option("--frame-interval", type=float, default=0.033, show_default=True, help="Seconds per frame.")
@guarded
def stream(config, seed, out, sets, model_path, data_dir, frames, use_bddc, frame_interval):
    """Replay test frames one at a time; report latency percentiles and overruns."""
    from pmuse.bddc import BddcPipeline, learn_stats
    from pmuse.cli.config import write_manifest
    from pmuse.cli.studies import nocdb_rows, stream_replay

    cfg = load_config(config, seed, out, sets)
    ds = get_dataset(cfg, data_dir)
    model = get_model(model_path)
    pipe = None
    if use_bddc:
        bc = cfg.bddc_config()
        c, pl = network(cfg) if bc.esf_enabled else (None, None)
        pipe = BddcPipeline(learn_stats(ds.train.z_noisy, ds.feature_names), nocdb_rows(ds), pl, c, bc)
    te = ds.test
    rep = stream_replay(te.z_noisy[:frames], model, pipe, frame_interval, te.x_true[:frames])
    info = rep.summary()
    write_manifest(cfg.output, "stream", cfg, info)
    emit_json(info)


@main.command("db-study")
@common
@click.option("--sizes", default="2500,5000,10000", show_default=True, help="Database sizes.")
@click.option("--test-rows", type=int, default=2000, show_default=True)
@guarded
def db_study(config, seed, out, sets, sizes, test_rows):
    """Test error versus training database size (fig8_dbsize.csv and figure)."""
    from pmuse.cli.config import write_manifest
    from pmuse.cli.plots import dbsize_figure
    from pmuse.cli.studies import database_size_study

    cfg = load_config(config, seed, out, sets)
    c, pl = network(cfg)
    rows = database_size_study(c, pl, cfg.injection_model(c), cfg.noise_model(),
                               [int(s) for s in sizes.split(",")], cfg.sub_seed("data"), cfg.mlp_config(),
                               n_test=test_rows)
    paths = dbsize_figure(rows, cfg.output)
    write_manifest(cfg.output, "db-study", cfg, {"files": [str(p) for p in paths]})
    for r in rows:
        click.echo(f"size={r.size} mape={r.mag_mape:.4f}% mae={r.ang_mae:.5f} rad epochs={r.epochs}")


if __name__ == "__main__":
    main()
