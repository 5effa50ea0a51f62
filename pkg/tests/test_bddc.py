import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmuse.bddc import (
    BddcConfig,
    BddcPipeline,
    ExtremeScenarioFilter,
    NocDatabase,
    WaldStats,
    esf_filter,
    learn_stats,
    noc_correct,
    wald_flag,
    wald_mask,
    wald_threshold,
)
from pmuse.netmodel import IEEE118_PMU_BUSES, apply_branch_outage, feature_map, find_branch, hop_distance, ieee118


@pytest.fixture(scope="module")
def c118():
    return ieee118()


@pytest.fixture(scope="module")
def pl118(c118):
    return feature_map(c118, IEEE118_PMU_BUSES)


def test_learn_stats_examples():
    s = learn_stats(np.array([[5.0, 0.0], [5.0, 2.0]]))
    assert s.mu.tolist() == [5.0, 1.0]
    assert s.sigma[0] == 1e-12 and s.floored.tolist() == [True, False]
    assert s.sigma[1] == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        learn_stats(np.ones((1, 2)))


def test_wald_threshold_value():
    assert wald_threshold(0.05) == pytest.approx(1.959963984540054, rel=1e-9)
    with pytest.raises(ValueError):
        wald_threshold(0.0)


def test_wald_flags():
    s = WaldStats(np.zeros(3), np.ones(3))
    assert wald_flag(np.zeros(3), s).size == 0
    assert wald_flag(np.array([5.0, 0.0, np.nan]), s).tolist() == [0, 2]


def test_wald_calibration_on_gaussian_data(rng):
    train = rng.normal(size=(20_000, 5))
    test = rng.normal(size=(20_000, 5))
    rate = wald_mask(test, learn_stats(train), 0.05).mean(axis=0)
    assert np.all(np.abs(rate - 0.05) < 0.01)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 10_000))
def test_wald_scale_equivariant(c, seed):
    r = np.random.default_rng(seed)
    z = r.normal(size=6) * 3
    s = WaldStats(r.normal(size=6), r.uniform(0.5, 2.0, 6))
    s2 = WaldStats(c * s.mu, c * s.sigma)
    assert np.array_equal(wald_flag(z, s), wald_flag(c * z, s2))


def test_noc_example():
    y = np.array([[1.0, 1.0], [10.0, 10.0]])
    out, k, fb = noc_correct(np.array([1.1, 999.0]), [1], y)
    assert out.tolist() == [1.1, 1.0] and k == 0 and not fb


def test_noc_no_flags_and_all_flags():
    y = np.array([[0.0, 0.0], [3.0, 3.0]])
    out, k, fb = noc_correct(np.array([2.9, 3.2]), [], y)
    assert k == 1 and out.tolist() == [2.9, 3.2] and not fb
    out, k, fb = noc_correct(np.array([2.9, 3.2]), [0, 1], y)
    assert fb and out.tolist() == [3.0, 3.0]


def test_noc_ties_pick_smallest_index():
    y = np.array([[1.0, 0.0], [1.0, 5.0]])
    assert noc_correct(np.array([1.0, 9.0]), [1], y)[1] == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_noc_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    y = r.normal(size=(50, 6))
    z = r.normal(size=6)
    bad = np.flatnonzero(r.random(6) < 0.4)
    good = np.setdiff1d(np.arange(6), bad)
    if good.size == 0:
        return
    out, k, _ = noc_correct(z, bad, y, NocDatabase(y))
    d = np.linalg.norm(y[:, good] - z[good], axis=1)
    assert d[k] == pytest.approx(d.min(), abs=1e-9)
    assert np.array_equal(out[bad], y[k, bad]) and np.array_equal(out[good], z[good])


def feats(pl, buses):
    owner = np.array([f.bus for f in pl.feature_schema])
    return np.flatnonzero(np.isin(owner, buses))


def test_esf_single_pmu_not_suppressed(c118, pl118):
    ib = feats(pl118, [68])
    assert np.array_equal(esf_filter(ib, pl118, c118), ib)


def test_esf_adjacent_pair_suppressed(c118, pl118):
    assert hop_distance(c118, 8, 9) == 1
    out, sup = ExtremeScenarioFilter(c118, pl118)(feats(pl118, [8, 9]))
    assert sup and out.size == 0


def test_esf_distant_pair_kept(c118, pl118):
    a, b = 8, 81
    assert hop_distance(c118, a, b) > 2
    ib = feats(pl118, [a, b])
    out, sup = ExtremeScenarioFilter(c118, pl118)(ib)
    assert not sup and np.array_equal(out, ib)


def test_esf_cluster_suppressed_isolated_kept(c118, pl118):
    ib = np.concatenate([feats(pl118, [8, 9, 10]), feats(pl118, [68])])
    out, sup = ExtremeScenarioFilter(c118, pl118)(ib)
    assert sup and np.array_equal(out, feats(pl118, [68]))


def test_esf_monotone_under_branch_removal(c118, pl118):
    ib = feats(pl118, [26, 30])
    base = ExtremeScenarioFilter(c118, pl118)(ib)[0]
    cut = apply_branch_outage(c118, find_branch(c118, 26, 30))
    pl_cut = feature_map(cut, IEEE118_PMU_BUSES)
    owner = np.array([f.bus for f in pl_cut.feature_schema])
    ib_cut = np.flatnonzero(np.isin(owner, [26, 30]))
    after = ExtremeScenarioFilter(cut, pl_cut)(ib_cut)[0]
    assert len(ib_cut) - len(after) <= len(ib) - len(base)


def test_pipeline_identity_on_clean_and_subset_invariant(rng, c118, pl118):
    y = rng.normal(size=(200, pl118.n_features))
    s = learn_stats(y)
    pipe = BddcPipeline(s, y, pl118, c118)
    r = pipe.process(s.mu)
    assert r.ibfs.size == 0 and np.array_equal(r.corrected, s.mu)
    z = y[3].copy()
    z[feats(pl118, [68])[0]] += 50 * s.sigma[feats(pl118, [68])[0]]
    r = pipe.process(z)
    assert set(r.ibfs_esf) <= set(r.ibfs)
    changed = np.flatnonzero(r.corrected != z)
    assert set(changed) <= set(r.ibfs_esf)


def test_pipeline_idempotent_on_corrected_output(rng):
    y = rng.normal(size=(300, 8))
    s = learn_stats(y)
    pipe = BddcPipeline(s, y, config=BddcConfig(esf_enabled=False))
    z = y[5].copy()
    z[2] = 40.0
    once = pipe.process(z).corrected
    twice = pipe.process(once)
    assert np.array_equal(twice.corrected, once)


def test_config_validation():
    with pytest.raises(ValueError):
        BddcConfig(alpha=1.5)
    with pytest.raises(ValueError):
        BddcConfig(correction="median")
    with pytest.raises(ValueError):
        BddcPipeline(WaldStats(np.zeros(2), np.ones(2)), np.zeros((2, 2)))
