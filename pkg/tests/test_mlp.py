import json
import warnings

import numpy as np
import pytest

from pmuse.errors import ModelFormatError, SchemaError
from pmuse.mlp import (
    FineTuneOptions,
    MlpConfig,
    Normalizer,
    TopologyMismatchWarning,
    fine_tune,
    grad_check,
    init_model,
    load_model,
    preset,
    remap_inputs,
    save_model,
    train,
)
from pmuse.mlp.train import renormalize
from pmuse.netmodel.presets import synthetic_case
from pmuse.sampler import Dataset


def linear_dataset(rng, n=600, m=4, k=2, noise=0.0):
    z = rng.normal(size=(n, m))
    A = rng.normal(size=(m, k))
    x = z @ A + 0.5 + noise * rng.normal(size=(n, k))
    names = [f"f{i}" for i in range(m)]
    targets = [f"t{i}" for i in range(k)]
    return Dataset(z, z, x, names, targets, "base", 0, (400, 100, 100)), A


def tiny_config(**kw):
    base = dict(hidden_layers=2, width=16, dropout_rate=0.2, learning_rate=0.01, batch_size=32,
                max_epochs=5, early_stop_patience=3, dtype="float64")
    base.update(kw)
    return MlpConfig(**base)


def test_presets():
    assert preset("ieee118") == MlpConfig()
    assert MlpConfig().width == 500 and MlpConfig().hidden_layers == 4
    assert preset("texas2000").batch_size == 256
    assert preset("small", max_epochs=7).max_epochs == 7
    with pytest.raises(ValueError):
        preset("nope")
    with pytest.raises(ValueError):
        MlpConfig(dropout_rate=1.0)


def test_normalizer_constant_column():
    data = np.array([[1.0, 5.0], [3.0, 5.0]])
    n = Normalizer.fit(data)
    out = n.forward(data)
    assert np.allclose(out[:, 1], 0.0)
    assert np.allclose(n.inverse(out), data)


def test_linear_model_recovers_exact_map(rng):
    ds, A = linear_dataset(rng)
    cfg = MlpConfig(hidden_layers=0, batch_norm=False, dropout_rate=0.0, learning_rate=0.05, batch_size=50,
                    max_epochs=400, early_stop_patience=30, dtype="float64")
    model, rep = train(ds, cfg)
    A_hat, c = model.linear_coefficients()
    assert np.allclose(A_hat, A, atol=1e-3)
    assert np.allclose(c, 0.5, atol=1e-3)


def test_training_is_deterministic(rng):
    ds, _ = linear_dataset(rng)
    m1, r1 = train(ds, tiny_config())
    m2, r2 = train(ds, tiny_config())
    assert r1.val_loss == r2.val_loss
    assert np.array_equal(m1.predict(ds.test.z_noisy), m2.predict(ds.test.z_noisy))


def test_early_stopping_restores_best(rng):
    ds, _ = linear_dataset(rng, noise=0.5)
    model, rep = train(ds, tiny_config(max_epochs=60, early_stop_patience=3))
    assert rep.stop_epoch == int(np.argmin(rep.val_loss)) + 1
    assert rep.epochs_run <= 60


@pytest.mark.parametrize("batch_norm", [True, False])
def test_gradient_check(rng, batch_norm):
    ds, _ = linear_dataset(rng)
    cfg = tiny_config(batch_norm=batch_norm, dropout_rate=0.0)
    model, _ = train(ds, cfg.with_overrides(max_epochs=2))
    err = grad_check(model, ds.test.z_noisy[:8], ds.test.x_true[:8], max_entries=None)
    assert err < 1e-4


def test_predict_schema_and_finite_checks(rng):
    ds, _ = linear_dataset(rng)
    model, _ = train(ds, tiny_config(max_epochs=1))
    with pytest.raises(SchemaError):
        model.predict(np.zeros(3))
    with pytest.raises(ValueError):
        model.predict(np.array([np.nan, 0, 0, 0]))
    single = model.predict(ds.test.z_noisy[0])
    assert single.shape == (2,)
    assert np.allclose(single, model.predict(ds.test.z_noisy[:1])[0])


def test_model_round_trip_is_exact(rng, tmp_path):
    ds, _ = linear_dataset(rng)
    model, _ = train(ds, tiny_config(dtype="float32"))
    p = save_model(model, tmp_path / "sub" / "m.json")
    back = load_model(p)
    assert np.array_equal(back.predict(ds.test.z_noisy), model.predict(ds.test.z_noisy))


def test_model_file_errors(tmp_path, rng):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_model(bad)
    ds, _ = linear_dataset(rng)
    model, _ = train(ds, tiny_config(max_epochs=1))
    p = save_model(model, tmp_path / "m.json")
    doc = json.loads(p.read_text())
    doc["version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(p)


def test_topology_mismatch_warns(rng, tmp_path):
    ds, _ = linear_dataset(rng)
    model, _ = train(ds, tiny_config(max_epochs=1))
    p = save_model(model, tmp_path / "m.json")
    case = synthetic_case(10)
    other = case.with_branch_status(case.branches[-1].id, True, topology_id="other")
    with pytest.warns(TopologyMismatchWarning):
        load_model(p, other)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_model(p, case)


def test_renormalize_preserves_function(rng):
    ds, _ = linear_dataset(rng)
    model, _ = train(ds, tiny_config())
    z = ds.test.z_noisy
    before = model.predict(z)
    renormalize(model, Normalizer.fit(z * 3 + 1), Normalizer.fit(ds.test.x_true * 2 - 1))
    assert np.allclose(model.predict(z), before, atol=1e-9)


def test_remap_and_fine_tune_drop_features(rng):
    ds, _ = linear_dataset(rng)
    model, _ = train(ds, tiny_config())
    sub = Dataset(ds.z_noisy[:, 1:], ds.z_noisy[:, 1:], ds.x_true, ds.feature_names[1:], ds.state_names,
                  "new", 0, ds.splits)
    remapped = remap_inputs(model, sub.feature_names)
    assert remapped.n_inputs == 3
    tuned, rep = fine_tune(model, sub, FineTuneOptions(samples=200, epochs=5))
    assert tuned.n_inputs == 3 and tuned.topology_id == "new"
    assert model.n_inputs == 4
    assert len(rep.val_loss) == 5
    with pytest.raises(SchemaError):
        remap_inputs(model, ["unknown"])


def test_init_shapes(rng):
    cfg = tiny_config()
    n = Normalizer.fit(np.ones((2, 3)))
    m = init_model(cfg, 3, 2, rng, n, Normalizer.fit(np.ones((2, 2))))
    assert [l.W.shape for l in m.layers] == [(3, 16), (16, 16), (16, 2)]
    assert m.param_names()[:4] == ["W0", "b0", "gamma0", "beta0"]
