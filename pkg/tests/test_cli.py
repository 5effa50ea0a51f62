import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from pmuse.bddc import BddcConfig, BddcPipeline, learn_stats
from pmuse.cli.config import RunConfig
from pmuse.cli.main import EXIT_NUMERICAL, EXIT_VALIDATION, default_splits, main
from pmuse.cli.metrics import hop_profile, metrics, tve, tve_summary
from pmuse.cli.plots import read_csv
from pmuse.cli.studies import bddc_sweep, database_size_study, stream_replay
from pmuse.mlp import preset, train
from pmuse.netmodel import save_case_json
from pmuse.netmodel.presets import three_bus, two_bus
from pmuse.powerflow import solve_pf
from pmuse.sampler import noise_preset, parametric_model

from conftest import SMALL_PMUS


def test_metrics_examples():
    t = np.array([[1.0, 0.1]])
    assert metrics(t, t).mag_mape == 0 and metrics(t, t).rmse == 0
    m = metrics(np.array([[1.01, 0.1]]), t)
    assert m.mag_mape == pytest.approx(1.0) and m.ang_mae == 0
    with pytest.raises(ValueError):
        metrics(np.zeros((1, 2)), np.zeros((1, 4)))
    with pytest.raises(ValueError):
        metrics(np.ones((1, 2)), np.array([[0.0, 0.0]]))


def test_metrics_permutation_invariant(rng):
    a = rng.uniform(0.9, 1.1, (20, 6))
    b = rng.uniform(0.9, 1.1, (20, 6))
    p = rng.permutation(20)
    assert metrics(a, b).summary() == pytest.approx(metrics(a[p], b[p]).summary())


def test_tve_examples():
    assert tve(1.0, 1.0) == 0.0
    assert tve(1.01, 1.0) == pytest.approx(0.01)
    assert tve(np.exp(0.01j), 1.0) == pytest.approx(2 * np.sin(0.005))
    assert tve(np.conj(1.01 + 0.2j), np.conj(1 + 0.1j)) == pytest.approx(tve(1.01 + 0.2j, 1 + 0.1j))
    with pytest.raises(ValueError):
        tve(1.0, 0.0)
    s = tve_summary(np.array([[1.01, 0.0]]), np.array([[1.0, 0.0]]))
    assert s["max"] == pytest.approx(0.01)


def test_hop_profile_buckets():
    c = three_bus()
    x = solve_pf(c).state[None]
    rows = hop_profile(x, x, [1], c)
    assert [(r.hops, r.n_buses) for r in rows] == [(0, 1), (1, 2)]
    all_pmu = hop_profile(x, x, [1, 2, 3], c)
    assert len(all_pmu) == 1 and all_pmu[0].hops == 0


@pytest.fixture(scope="module")
def small_model(small_dataset):
    model, _ = train(small_dataset, preset("small", max_epochs=40))
    return model


def test_stream_replay_reports_and_is_deterministic(small_model, small_dataset):
    frames = np.repeat(small_dataset.test.z_noisy[:1], 20, axis=0)
    rep, est = stream_replay(frames, small_model, None, outputs=True)
    assert np.all(est == est[0])
    assert rep.p50 <= rep.p95 <= rep.max and rep.overruns == 0
    s = learn_stats(small_dataset.train.z_noisy)
    pipe = BddcPipeline(s, small_dataset.train.z_noisy, config=BddcConfig(esf_enabled=False))
    rep = stream_replay(small_dataset.test.z_noisy, small_model, pipe, x_true=small_dataset.test.x_true)
    assert rep.p95 < 33.0 and "mag_mape_pct" in rep.summary()


def test_bddc_sweep_rows(small_model, small_dataset):
    rows = bddc_sweep(small_model, small_dataset, [0.1, 0.3], [3.0], seed=0)
    assert len(rows) == 6 and {r.mode for r in rows} == {"none", "mean", "noc"}


def test_database_size_study_dedupes(small_case, small_placement):
    rows = database_size_study(small_case, small_placement, parametric_model(small_case), noise_preset("gaussian"),
                               [80, 40, 80], seed=0, config=preset("small", max_epochs=3), n_test=20)
    assert [r.size for r in rows] == [40, 80]
    single = database_size_study(small_case, small_placement, parametric_model(small_case),
                                 noise_preset("gaussian"), [40], 0, preset("small", max_epochs=2), n_test=20)
    assert len(single) == 1


def test_run_config_seeds_hash_and_validation(tmp_path):
    a = RunConfig(seed=1)
    assert a.sub_seed("data") != a.sub_seed("init")
    assert a.sub_seed("data") == RunConfig(seed=1).sub_seed("data")
    assert a.config_hash() == RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()
    with pytest.raises(ValueError):
        RunConfig(samples=10, splits=[8, 4, 0])
    with pytest.raises(ValueError):
        a.sub_seed("nope")
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump({"seed": 3, "mlp": {"preset": "small"}}))
    cfg = RunConfig.load(p, {"seed": 9, "mlp.overrides.max_epochs": 5})
    assert cfg.seed == 9 and cfg.mlp_config().max_epochs == 5
    with pytest.raises(FileNotFoundError):
        RunConfig.load(p, {"case": "missing.json"})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory, small_case):
    d = tmp_path_factory.mktemp("cli")
    save_case_json(small_case, d / "case.json")
    (d / "pl.json").write_text(json.dumps(list(SMALL_PMUS)))
    cfg = {"case": "case.json", "placement": "pl.json", "samples": 300, "splits": [180, 60, 60],
           "mlp": {"preset": "small", "max_epochs": 20}, "seed": 5}
    (d / "run.yaml").write_text(yaml.safe_dump(cfg))
    return d


def run(args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_cli_pipeline(cli_env):
    d = cli_env
    c = d / "run.yaml"
    r = run(["case", "validate", "-c", c])
    assert r.exit_code == 0 and json.loads(r.output)["buses"] == 30
    r = run(["data", "generate", "-c", c, "--out", d / "data"])
    assert r.exit_code == 0, r.output
    man = json.loads((d / "data" / "manifest.json").read_text())
    assert man["config_hash"] and man["seeds"]["data"] and man["versions"]["numpy"]
    ds = d / "data" / "dataset"
    r = run(["train", "-c", c, "--data", ds, "--out", d / "model"])
    assert r.exit_code == 0, r.output
    model = d / "model" / "model.json"
    r = run(["evaluate", "-c", c, "--model", model, "--data", ds, "--out", d / "eval"])
    assert r.exit_code == 0 and "input_tve" in json.loads(r.output)
    r = run(["hop-profile", "-c", c, "--model", model, "--data", ds, "--out", d / "hop"])
    assert r.exit_code == 0
    header, rows = read_csv(d / "hop" / "fig3_hops.csv")
    assert header[0] == "hops" and (d / "hop" / "fig3_hops.png").is_file()
    r = run(["bddc", "simulate", "-c", c, "--model", model, "--data", ds, "--etas", "0.1,0.2", "--ks", "3,5",
             "--out", d / "bddc"])
    assert r.exit_code == 0, r.output
    for name in ("fig6_eta.csv", "fig7_severity.csv", "fig6_eta.png", "fig7_severity.svg"):
        assert (d / "bddc" / name).is_file()
    r = run(["stream", "-c", c, "--model", model, "--data", ds, "--frames", 20, "--no-bddc", "--out", d / "s"])
    assert r.exit_code == 0 and json.loads(r.output)["frames"] == 20
    r = run(["lse", "-c", c, "--placement", d / "pl.json"])
    assert r.exit_code == EXIT_VALIDATION
    r = run(["db-study", "-c", c, "--sizes", "60,120", "--test-rows", 20, "--out", d / "db",
             "--set", "mlp.max_epochs=2"])
    assert r.exit_code == 0, r.output
    assert (d / "db" / "fig8_dbsize.csv").is_file() and (d / "db" / "fig8_dbsize.png").is_file()


def test_cli_estimate_reorders_columns(cli_env, small_dataset, small_model, tmp_path):
    from pmuse.mlp import save_model

    mp = save_model(small_model, tmp_path / "m.json")
    names = list(small_dataset.feature_names)[::-1]
    z = small_dataset.test.z_noisy[:3, ::-1]
    np.savetxt(tmp_path / "in.csv", z, delimiter=",", header=",".join(names), comments="")
    r = run(["estimate", "--model", mp, "--input", tmp_path / "in.csv", "--output", tmp_path / "o.csv"])
    assert r.exit_code == 0
    out = np.loadtxt(tmp_path / "o.csv", delimiter=",", skiprows=1)
    assert np.allclose(out, small_model.predict(small_dataset.test.z_noisy[:3]))


def test_cli_exit_codes(tmp_path):
    assert run(["case", "validate", "--case", tmp_path / "missing.json"]).exit_code == EXIT_VALIDATION
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(["case", "validate", "--case", bad]).exit_code == EXIT_VALIDATION
    heavy = tmp_path / "heavy.json"
    save_case_json(two_bus(z=0.1j, p_load=50.0), heavy)
    assert run(["case", "validate", "--case", heavy]).exit_code == EXIT_NUMERICAL


def test_oracle_command(tmp_path):
    r = run(["oracle", "-F", 300, "--out", tmp_path])
    assert r.exit_code == 0 and "ordering" in r.output
    header, rows = read_csv(tmp_path / "oracle.csv")
    assert header == ["case", "given", "mae_v3"] and len(rows) == 5


def test_default_splits():
    s = default_splits(700)
    assert sum(s) == 700 and min(s) > 0
