import math
from dataclasses import replace

import numpy as np
import pytest

from infeasloc.errors import InvalidAlpha, InvalidTopology, MalformedCase
from infeasloc.network import (
    Branch,
    Bus,
    BusKind,
    dump_json,
    load_case,
    load_json,
    parse_matpower,
    scale_loading,
    validate,
)

from conftest import CASE14, TWO_BUS, two_bus


def test_two_bus_parse():
    net = two_bus(50, 20)
    assert net.n_bus == 2 and net.n_branch == 1
    assert [b.kind for b in net.buses] == [BusKind.SLACK, BusKind.PQ]
    assert net.alpha == 1.0
    assert net.loads[0].p == pytest.approx(0.5) and net.loads[0].q == pytest.approx(0.2)


def test_case14_parse(case14):
    assert case14.n_bus == 14
    assert case14.n_branch == 20
    assert case14.buses[case14.slack_index].id == 1
    assert {g.bus for g in case14.generators} == {1, 2, 3, 6, 8}
    assert validate(case14) == []


def test_per_unit_exact():
    net = parse_matpower(TWO_BUS.format(p=37.3, q=-11.9).replace("1 0 0 100", "1 12.34 0 100"))
    assert net.generators[0].p_set == 12.34 / 100
    assert net.loads[0].p == 37.3 / 100
    assert net.loads[0].q == -11.9 / 100


def test_comments_and_degrees():
    text = TWO_BUS.format(p=10, q=5).replace("mpc.baseMVA = 100;", "mpc.baseMVA = 100;  % system base")
    text = text.replace("1 3   0   0 0 0 1 1.0 0", "1 3   0   0 0 0 1 1.0 30")
    net = parse_matpower(text)
    assert net.buses[0].theta_set == pytest.approx(math.pi / 6)


def test_isolated_and_out_of_service_dropped():
    text = TWO_BUS.format(p=10, q=5).replace(
        "    2 1", "    3 4 0 0 0 0 1 1.0 0 100 1 1.1 0.9;\n    2 1")
    text = text.replace("1 2 0.05 0.5 0 0 0 0 0 0 1", "1 2 0.05 0.5 0 0 0 0 0 0 1 -360 360;\n    1 2 0.1 0.2 0 0 0 0 0 0 0")
    net = parse_matpower(text)
    assert net.n_bus == 2 and net.n_branch == 1


def test_multiple_units_aggregate(case14):
    text = CASE14.read_text().replace(
        "\t2\t40\t42.4", "\t2\t15\t20.4\t50\t-40\t1.045\t100\t1\t332.4\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;\n\t2\t25\t22.0", 1)
    assert text != CASE14.read_text()
    net = parse_matpower(text)
    g = next(g for g in net.generators if g.bus == 2)
    assert g.p_set == pytest.approx(0.40)
    assert len(net.generators) == 5


@pytest.mark.parametrize("text, exc", [
    ("mpc.bus = [1 3 0 0 0 0 1 1 0 100 1 1.1 0.9];", MalformedCase),
    (TWO_BUS.format(p="abc", q=0), MalformedCase),
    (TWO_BUS.format(p=10, q=0).replace("mpc.branch", "mpc.nobranch"), MalformedCase),
    (TWO_BUS.format(p=10, q=0).replace("0.05 0.5", "0 0"), InvalidTopology),
    (TWO_BUS.format(p=10, q=0).replace("1 2 0.05", "1 7 0.05"), InvalidTopology),
    (TWO_BUS.format(p=10, q=0).replace("1 3   0", "1 1   0"), InvalidTopology),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_matpower(text)


def test_topology_error_carries_diagnostics():
    with pytest.raises(InvalidTopology) as info:
        parse_matpower(TWO_BUS.format(p=10, q=0).replace("0.05 0.5", "0 0"))
    assert [d.code for d in info.value.diagnostics] == ["ZeroImpedance"]


def test_validate_multiple_slack(case14):
    buses = list(case14.buses)
    buses[1] = replace(buses[1], kind=BusKind.SLACK)
    codes = [d.code for d in validate(replace(case14, buses=tuple(buses)))]
    assert codes == ["MultipleSlack"]


def test_validate_dangling_branch(case14):
    net = replace(case14, branches=case14.branches + (Branch(1, 99, 0.01, 0.1),))
    assert [d.code for d in validate(net)] == ["DanglingBranch"]


def test_validate_more(case14):
    buses = case14.buses + (Bus(id=1, kind=BusKind.PQ), Bus(id=77, kind=BusKind.PQ))
    codes = {d.code for d in validate(replace(case14, buses=buses))}
    assert {"DuplicateBus", "Island"} <= codes
    bad = replace(case14, branches=(replace(case14.branches[0], tap=-1.0),) + case14.branches[1:])
    assert [d.code for d in validate(bad)] == ["NonPositiveTap"]


def test_validate_does_not_mutate(case14):
    before = dump_json(case14)
    validate(case14)
    assert dump_json(case14) == before


def test_scale_identity(case14):
    assert scale_loading(case14, 1.0).loads == case14.loads


def test_scale_case14(case14):
    net = scale_loading(case14, 4.5)
    for a, b in zip(case14.loads, net.loads):
        assert (b.p, b.q) == (a.p * 4.5, a.q * 4.5)
    assert net.alpha == 4.5


def test_scale_two_bus():
    net = scale_loading(two_bus(50, 0), 2.0)
    assert net.loads[0].p == pytest.approx(1.0)


def test_scale_loads_only_keeps_generation(case14):
    net = scale_loading(case14, 2.0, generation=False)
    assert net.generators == case14.generators
    gen = scale_loading(case14, 2.0)
    assert all(g.p_set == 2.0 * h.p_set and g.v_set == h.v_set for g, h in zip(gen.generators, case14.generators))


@pytest.mark.parametrize("a, b", [(1.5, 3.0), (0.25, 4.0), (1.1, 1.1)])
def test_scale_composes(case14, a, b):
    lhs = scale_loading(scale_loading(case14, a), b)
    rhs = scale_loading(case14, a * b)
    for x, y in zip(lhs.loads, rhs.loads):
        assert x.p == pytest.approx(y.p, rel=1e-15) and x.q == pytest.approx(y.q, rel=1e-15)
    assert lhs.alpha == pytest.approx(a * b)


@pytest.mark.parametrize("alpha", [0.0, -1.0, math.inf, math.nan, True, "2"])
def test_scale_invalid(case14, alpha):
    with pytest.raises(InvalidAlpha):
        scale_loading(case14, alpha)


def test_json_round_trip(case14):
    net = scale_loading(case14, 1.7)
    back = load_json(dump_json(net))
    assert back == net
    assert load_json(dump_json(back)) == back


def test_json_bad_schema():
    with pytest.raises(MalformedCase):
        load_json('{"schema": "other"}')


def test_load_case_missing(tmp_path):
    with pytest.raises(OSError):
        load_case(tmp_path / "missing.m")


def test_index_maps(case14):
    assert list(case14.bus_ids) == list(range(1, 15))
    assert all(case14.index_of[b.id] == i for i, b in enumerate(case14.buses))
    assert case14.bus(14).id == 14
