import numpy as np
import pytest

from pmuse.baseline_lse import build_h, check_observable, polar_to_rect, solve_lse
from pmuse.errors import UnobservableError
from pmuse.netmodel import IEEE118_PMU_BUSES, feature_map, ieee118
from pmuse.netmodel.presets import synthetic_case, three_bus, triangle, two_bus
from pmuse.powerflow import MeasurementModel, solve_pf


def test_two_bus_full_rank():
    m = build_h(two_bus(), [1])
    assert m.H.shape == (4, 4)
    assert check_observable(m).observable


def test_triangle_single_pmu_full_rank():
    rep = check_observable(build_h(triangle(), [1]))
    assert rep.rank == 6 and rep.observable


def test_ieee118_placement_unobservable():
    c = ieee118()
    rep = check_observable(build_h(c, IEEE118_PMU_BUSES))
    assert not rep.observable and rep.rank == 42 and rep.deficiency == 194
    with pytest.raises(UnobservableError):
        solve_lse(build_h(c, IEEE118_PMU_BUSES), np.zeros(82))


def test_empty_placement_unobservable():
    c = two_bus()
    assert not check_observable(build_h(c, feature_map(c, []))).observable


@pytest.mark.parametrize("case,pmus", [(three_bus(), [1, 3]), (synthetic_case(40, 2), None)])
def test_exact_recovery_noiseless(case, pmus):
    pmus = pmus or list(case.bus_ids)
    pl = feature_map(case, pmus)
    sol = solve_pf(case)
    z = MeasurementModel(case, pl).features(sol.v)
    est = solve_lse(build_h(case, pl), polar_to_rect(z))[0]
    assert np.max(np.abs(est - sol.state)) < 1e-10


def test_weights_validation():
    with pytest.raises(ValueError):
        build_h(two_bus(), [1], weights=np.ones(3))
