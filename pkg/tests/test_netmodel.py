import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmuse.errors import CaseValidationError, IslandingError, UnknownBusError
from pmuse.netmodel import (
    IEEE118_PMU_BUSES,
    BranchRecord,
    BusRecord,
    NetworkCase,
    apply_branch_outage,
    build_ybus,
    case_from_dict,
    case_to_dict,
    enumerate_n1_topologies,
    feature_map,
    find_branch,
    hop_distance,
    hop_matrix,
    ieee118,
    is_connected,
    load_case,
    min_hops_to_pmus,
    multi_source_hops,
    restore_branch,
    save_case_json,
)
from pmuse.netmodel.presets import synthetic_case, three_bus, triangle, two_bus


def test_two_bus_ybus_entries():
    y = build_ybus(two_bus(z=0.1j))
    assert np.allclose(y, [[-10j, 10j], [10j, -10j]])


def test_ybus_includes_half_charging_and_shunt():
    buses = [BusRecord(1, "slack", shunt_admittance=0.2j), BusRecord(2, "PQ")]
    case = NetworkCase("c", buses, [BranchRecord(1, 1, 2, 0.1j, 0.4)])
    y = build_ybus(case)
    assert y[0, 0] == pytest.approx(-10j + 0.2j + 0.2j)
    assert y[1, 1] == pytest.approx(-10j + 0.2j)


def test_sparse_ybus_matches_dense():
    c = ieee118()
    assert np.allclose(build_ybus(c, sparse=True).toarray(), build_ybus(c))


def test_ybus_rows_sum_to_shunts_without_charging():
    y = build_ybus(triangle())
    assert np.allclose(y.sum(axis=1), 0)


def test_case_validation_errors():
    with pytest.raises(CaseValidationError):
        NetworkCase("c", [BusRecord(1, "PQ"), BusRecord(2, "PQ")], [BranchRecord(1, 1, 2, 0.1j)])
    with pytest.raises(CaseValidationError):
        NetworkCase("c", [BusRecord(1, "slack"), BusRecord(2, "PQ")], [BranchRecord(1, 1, 3, 0.1j)])
    with pytest.raises(CaseValidationError):
        NetworkCase("c", [BusRecord(1, "slack"), BusRecord(1, "PQ")], [])
    with pytest.raises(CaseValidationError):
        NetworkCase("c", [BusRecord(1, "slack"), BusRecord(2, "PQ")], [BranchRecord(1, 1, 2, 0j)])
    with pytest.raises(UnknownBusError):
        two_bus().bus(7)


def test_json_round_trip(tmp_path):
    c = three_bus()
    assert case_from_dict(case_to_dict(c)) == c
    p = tmp_path / "c.json"
    save_case_json(c, p)
    assert load_case(p) == c


def test_ieee118_counts_and_n1():
    c = ieee118()
    assert c.n_bus == 118 and len(c.branches) == 186
    assert c.slack_id == 69
    assert len(enumerate_n1_topologies(c)) == 177


def test_placement_feature_count_is_82():
    pl = feature_map(ieee118(), IEEE118_PMU_BUSES)
    assert pl.n_features == 82
    assert len(set(pl.names)) == 82
    assert pl.names[:2] == ["Vmag@bus8", "Vang@bus8"]
    assert pl.angle_mask().sum() == 41


def test_hop_distances():
    c = ieee118()
    assert hop_distance(c, 8, 8) == 0
    assert hop_distance(c, 8, 9) == 1
    hops = multi_source_hops(c, IEEE118_PMU_BUSES)
    assert min_hops_to_pmus(c, IEEE118_PMU_BUSES, 8) == 0
    assert max(hops.values()) == 7 and len(hops) == 118
    m = hop_matrix(c, [8, 68, 81])
    assert m[8, 8] == 0 and m[68, 81] == m[81, 68]


def test_three_bus_hops_from_bus1():
    hops = multi_source_hops(three_bus(), [1])
    assert hops == {1: 0, 2: 1, 3: 1}


def test_outage_and_restore():
    c = ieee118()
    bid = find_branch(c, 26, 30)
    out = apply_branch_outage(c, bid)
    assert not out.branch(bid).in_service
    assert "Imag@26-30" not in feature_map(out, IEEE118_PMU_BUSES).names
    back = restore_branch(out, bid)
    assert back == c


def test_islanding_outage_names_cut_buses():
    with pytest.raises(IslandingError) as exc:
        apply_branch_outage(two_bus(), 1)
    assert exc.value.component == (2,)


@settings(max_examples=20, deadline=None)
@given(st.integers(10, 60), st.integers(0, 1000))
def test_synthetic_cases_are_connected(n, seed):
    c = synthetic_case(n, seed)
    assert is_connected(c)
    # outage of any non-bridge keeps connectivity
    for bid in enumerate_n1_topologies(c)[:5]:
        assert is_connected(apply_branch_outage(c, bid))


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 40), st.integers(0, 1000))
def test_ybus_symmetric(n, seed):
    y = build_ybus(synthetic_case(n, seed))
    assert np.allclose(y, y.T)
