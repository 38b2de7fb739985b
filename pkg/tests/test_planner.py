import dataclasses

import numpy as np
import pytest

from nvaqs.bathgen import BathConfiguration, assign_polarizations
from nvaqs.device import heavy_hex_27, ideal_simulator, shipped_profiles
from nvaqs.physics import DephasingSeries, dephasing_factor_analytic
from nvaqs.planner import (
    GridMismatchError,
    PartitionPlan,
    PlanGroup,
    combine_groups,
    execute_plan,
    load_plan,
    parse_backend,
    partition_bath,
    random_partition,
    save_plan,
)

PROFILES = shipped_profiles()


def test_default_partition_table(bath):
    plan = partition_bath(bath, heavy_hex_27(), ideal_simulator())
    assert plan.sizes("heavy_hex_27") == [3, 3, 3, 1]
    assert [g.qubits for g in plan.groups[:4]] == [7, 7, 7, 3]
    sim = plan.sizes("ideal_simulator")
    assert len(sim) == 51 and set(sim) == {10}
    assert all(g.qubits == 21 for g in plan.groups[4:])
    assert plan.nuclei == list(range(520))
    # contiguous distance-ordered ranges
    assert plan.groups[0].nuclei == (0, 1, 2) and plan.groups[4].nuclei == tuple(range(10, 20))


def test_no_inner_nuclei():
    b = BathConfiguration.from_arrays([[0, 0, 1.5], [0, 0, 2.0]])
    plan = partition_bath(b, heavy_hex_27(), ideal_simulator())
    assert plan.sizes("heavy_hex_27") == []
    assert plan.sizes("ideal_simulator") == [2]


def test_single_inner_nucleus():
    b = BathConfiguration.from_arrays([[0, 0, 0.8]])
    plan = partition_bath(b, heavy_hex_27(), ideal_simulator())
    assert len(plan.groups) == 1 and plan.groups[0].qubits == 3 and plan.groups[0].profile == "heavy_hex_27"


def test_partition_is_deterministic(bath):
    a = partition_bath(bath, heavy_hex_27(), ideal_simulator())
    assert a == partition_bath(bath, heavy_hex_27(), ideal_simulator())


def test_plan_validation(bath):
    with pytest.raises(ValueError):
        PartitionPlan((PlanGroup((0, 1), "ideal_simulator"), PlanGroup((1, 2), "ideal_simulator")))
    small = BathConfiguration.from_arrays([[0, 0, 0.8], [0, 0, 1.5]])
    with pytest.raises(ValueError, match="cover"):
        PartitionPlan((PlanGroup((0,), "ideal_simulator"),)).validate(small, PROFILES)
    with pytest.raises(ValueError, match="max_pairs"):
        PartitionPlan((PlanGroup((0, 1), "heavy_hex_27"),)).validate(
            small, {"heavy_hex_27": dataclasses.replace(heavy_hex_27(), max_pairs=1)}
        )
    polarized = assign_polarizations(small, (1, 0, 0))
    locked = dataclasses.replace(ideal_simulator(), controllable=False)
    with pytest.raises(ValueError, match="polarized"):
        PartitionPlan((PlanGroup((0, 1), "ideal_simulator"),)).validate(polarized, {"ideal_simulator": locked})


def test_plan_json_round_trip(tmp_path, bath):
    plan = partition_bath(bath, heavy_hex_27(), ideal_simulator())
    path = save_plan(plan, tmp_path / "plan.json")
    assert load_plan(path) == plan
    import json

    doc = json.loads(path.read_text())
    assert doc["groups"][0]["qubits"] == 7 and doc["groups"][0]["nuclei"] == [0, 1, 2]
    doc["groups"][0]["qubits"] = 9
    with pytest.raises(ValueError):
        PartitionPlan.from_json(doc)


def test_combine_single_and_identity(bath, grid):
    s = dephasing_factor_analytic(bath.subset(range(5)), 100, grid)
    assert combine_groups([s]) is s
    ones = DephasingSeries(grid, np.ones(len(grid)))
    assert np.array_equal(combine_groups([s, ones]).values, s.values)


def test_combine_matches_union(bath, grid):
    b = assign_polarizations(bath, (1, 0, 0))
    a = dephasing_factor_analytic(b.subset(range(0, 200)), 100, grid)
    c = dephasing_factor_analytic(b.subset(range(200, 520)), 100, grid)
    whole = dephasing_factor_analytic(b, 100, grid)
    assert np.max(np.abs(combine_groups([a, c]).values - whole.values)) < 1e-12


def test_combine_refuses_grid_mismatch(bath):
    a = dephasing_factor_analytic(bath.subset([0]), 100, np.linspace(0, 1, 5))
    b = dephasing_factor_analytic(bath.subset([1]), 100, np.linspace(0, 1.0000001, 5))
    with pytest.raises(GridMismatchError):
        combine_groups([a, b])
    with pytest.raises(ValueError):
        combine_groups([])


def test_random_partition_is_lossless(bath, grid):
    rng = np.random.default_rng(4)
    b = assign_polarizations(bath, (0.6, 0, 0.8))
    whole = dephasing_factor_analytic(b, 200, grid).values
    for _ in range(3):
        plan = random_partition(len(b), 10, rng)
        assert plan.nuclei == list(range(520))
        _, combined = execute_plan(b, plan, 200, grid, PROFILES, {"*": "analytic"})
        assert np.max(np.abs(combined.values - whole)) < 1e-12


def test_parse_backend():
    assert parse_backend("analytic") == ("analytic", None)
    assert parse_backend("shots(128)") == ("shots", 128)
    assert parse_backend("shots", 64) == ("shots", 64)
    assert parse_backend("noisy", 32) == ("noisy", 32)
    for bad in ("shots(1)", "shots", "magic"):
        with pytest.raises(ValueError):
            parse_backend(bad)


def test_mixed_backends_match_analytic(bath):
    t = np.linspace(0, 20, 41)
    b = assign_polarizations(bath, (1, 0, 0))
    plan = partition_bath(b, heavy_hex_27(kick=0.0), ideal_simulator())
    profiles = {"heavy_hex_27": heavy_hex_27(kick=0.0), "ideal_simulator": ideal_simulator()}
    groups, combined = execute_plan(b, plan, 100, t, profiles, {"heavy_hex_27": "noisy", "ideal_simulator": "analytic"})
    assert [g.backend for g in groups[:4]] == ["noisy:heavy_hex_27"] * 4
    assert np.max(np.abs(combined.values - dephasing_factor_analytic(b, 100, t).values)) < 1e-9


def test_shot_runs_reproducible(bath):
    t = np.linspace(0, 5, 6)
    b = bath.subset(range(12))
    plan = partition_bath(b, heavy_hex_27(), ideal_simulator())
    run = lambda: execute_plan(b, plan, 100, t, PROFILES, {"heavy_hex_27": "shots(64)", "ideal_simulator": "analytic"}, seed=9)[1]
    assert np.array_equal(run().values, run().values)


def test_group_failure_propagates(bath):
    b = bath.subset(range(12))
    plan = PartitionPlan((PlanGroup(tuple(range(12)), "big"),))
    big = dataclasses.replace(ideal_simulator(), name="big", max_pairs=12)
    with pytest.raises(ValueError, match="capacity"):
        execute_plan(b, plan, 100, [0.0, 1.0], {"big": big}, {"*": "exact-circuit"})
