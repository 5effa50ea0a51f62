import numpy as np
import pytest

from pmuse.errors import CaseValidationError, DivergenceError
from pmuse.netmodel import IEEE118_PMU_BUSES, apply_branch_outage, feature_map, find_branch, ieee118
from pmuse.netmodel.presets import synthetic_case, three_bus, triangle, two_bus
from pmuse.powerflow import (
    MeasurementModel,
    PowerFlowSolver,
    branch_current,
    injection_current,
    injection_current_by_branches,
    polar_to_complex,
    solve_pf,
)


def mismatch(case, sol):
    s = PowerFlowSolver(case)
    v = sol.v
    calc = v * np.conj(s.ybus @ v)
    kinds = [b.kind for b in case.buses]
    p_spec = np.array([b.p_inj for b in case.buses])
    q_spec = np.array([b.q_inj for b in case.buses])
    dp = [abs(calc[i].real - p_spec[i]) for i, k in enumerate(kinds) if k != "slack"]
    dq = [abs(calc[i].imag - q_spec[i]) for i, k in enumerate(kinds) if k == "PQ"]
    return max(dp + dq)


def test_flat_no_load_converges_in_one_evaluation():
    sol = solve_pf(two_bus())
    assert sol.iterations == 1
    assert np.allclose(sol.v_mag, 1.0) and np.allclose(sol.v_ang, 0.0)


def test_two_bus_against_closed_form():
    # lossless line, P load only: |V2|^2 sin(d) relation
    c = two_bus(z=0.1j, p_load=1.0)
    sol = solve_pf(c)
    v2 = sol.v[1]
    s2 = v2 * np.conj((v2 - 1.0) / 0.1j)
    assert s2.real == pytest.approx(-1.0, abs=1e-8)
    assert s2.imag == pytest.approx(0.0, abs=1e-8)


def test_ieee118_mismatch_below_tolerance():
    c = ieee118()
    sol = solve_pf(c)
    assert sol.max_mismatch < 1e-8
    assert mismatch(c, sol) < 1e-8
    assert 0.94 < sol.v_mag.min() and sol.v_mag.max() < 1.06


def test_sparse_and_dense_paths_agree(monkeypatch):
    import pmuse.powerflow as pf

    c = ieee118()
    a = solve_pf(c)
    monkeypatch.setattr(pf, "DENSE_LIMIT", 0)
    b = solve_pf(c)
    assert np.allclose(a.v, b.v, atol=1e-12)


def test_three_bus_heavier_load_lowers_v3():
    base = solve_pf(three_bus())
    heavy = solve_pf(three_bus(p3=-1.5 * 1.5, q3=-0.75))
    assert heavy.v_mag[2] < base.v_mag[2]


def test_divergence_reported():
    with pytest.raises(DivergenceError) as exc:
        solve_pf(two_bus(z=0.1j, p_load=50.0))
    assert exc.value.trajectory


def test_currents_consistent():
    c = three_bus()
    sol = solve_pf(c)
    for b in c.bus_ids:
        assert injection_current(sol, c, b) == pytest.approx(injection_current_by_branches(sol, c, b), abs=1e-10)
    i12 = branch_current(sol, c, 1, "from")
    i21 = branch_current(sol, c, 1, "to")
    assert i12 == pytest.approx(-i21)


def test_measurement_model_matches_branch_currents():
    c = ieee118()
    pl = feature_map(c, IEEE118_PMU_BUSES)
    sol = solve_pf(c)
    f = MeasurementModel(c, pl).features(sol.v)[0]
    assert f.shape == (82,)
    ph = np.ravel(polar_to_complex(f))
    idx = pl.names.index("Imag@8-30") // 2
    bid = find_branch(c, 8, 30)
    end = "from" if c.branch(bid).from_bus == 8 else "to"
    assert ph[idx] == pytest.approx(branch_current(sol, c, bid, end), abs=1e-10)


def test_open_branch_reads_zero_only_when_allowed():
    c = ieee118()
    old = feature_map(c, IEEE118_PMU_BUSES)
    out = apply_branch_outage(c, find_branch(c, 26, 30))
    with pytest.raises(CaseValidationError):
        MeasurementModel(out, old)
    sol = solve_pf(out)
    f = MeasurementModel(out, old, allow_open=True).features(sol.v)[0]
    assert f[old.names.index("Imag@26-30")] == 0.0


def test_synthetic_500_bus_converges():
    c = synthetic_case(500, seed=3)
    sol = solve_pf(c)
    assert mismatch(c, sol) < 1e-8


def test_triangle_symmetry():
    sol = solve_pf(triangle(loads=(0.5, 0.5)))
    assert sol.v_mag[1] == pytest.approx(sol.v_mag[2])
