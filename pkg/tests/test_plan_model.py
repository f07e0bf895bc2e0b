"""Tests for plan data structures, constructors, and topology extraction."""

import json

import numpy as np
import pytest

from ramify.plan_model import (
    Branch,
    BranchPlan,
    Path,
    PathPlan,
    TargetMeasure,
    TopologyError,
    build_fan_branches,
    build_star_plan,
    crossing_cluster_count,
    extract_topology,
    half_circle_targets,
    load_plan,
    plan_from_dict,
    plan_to_dict,
    random_branch_plan,
    saturated_pair_plans,
    save_plan,
    segment_table,
)


def test_target_measure_validation():
    with pytest.raises(ValueError):
        TargetMeasure(positions=np.zeros((0, 2)), masses=np.zeros(0))
    with pytest.raises(ValueError):
        TargetMeasure(positions=np.ones((2, 2)), masses=np.ones(3))
    with pytest.raises(ValueError):
        TargetMeasure(positions=np.array([[1.0, 0.0]]), masses=np.array([0.0]))
    with pytest.raises(ValueError, match="share a position"):
        TargetMeasure(positions=np.array([[1.0, 0.0], [1.0, 0.0]]), masses=np.array([1.0, 1.0]))


def test_path_must_start_at_origin():
    with pytest.raises(ValueError, match="origin"):
        Path(vertices=np.array([[0.1, 0.0], [1.0, 0.0]]), mass=1.0)
    with pytest.raises(ValueError):
        Path(vertices=np.array([[0.0, 0.0], [1.0, 0.0]]), mass=-1.0)
    with pytest.raises(ValueError):
        Path(vertices=np.array([[0.0, 0.0]]), mass=1.0)


def test_branch_validation():
    with pytest.raises(ValueError, match="len"):
        Branch(x=np.array([0.0, 1.0]), y=np.array([0.0, 1.0]), m=np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="origin"):
        Branch(x=np.array([0.5, 1.0]), y=np.array([0.0, 1.0]), m=np.array([1.0]))
    with pytest.raises(ValueError, match="nonnegative"):
        Branch(x=np.array([0.0, 1.0]), y=np.array([0.0, -0.1]), m=np.array([1.0]))
    with pytest.raises(ValueError, match="nonnegative"):
        Branch(x=np.array([0.0, 1.0]), y=np.array([0.0, 1.0]), m=np.array([-1.0]))


def test_path_plan_aggregates():
    p1 = Path(vertices=np.array([[0.0, 0.0], [1.0, 0.0]]), mass=0.25)
    p2 = Path(vertices=np.array([[0.0, 0.0], [0.0, 2.0]]), mass=0.75)
    plan = PathPlan(paths=(p1, p2))
    assert plan.total_mass == pytest.approx(1.0)
    assert plan.all_vertices().shape == (4, 2)
    assert plan.diameter() == pytest.approx(np.hypot(1.0, 2.0))


def test_branch_plan_total_leaf_mass():
    b = Branch(x=np.array([0.0, 1.0, 1.0]), y=np.array([0.0, 0.0, 2.0]), m=np.array([0.5, 0.25]))
    plan = BranchPlan(branches=(b,))
    # densities times segment lengths: 0.5 * 1 + 0.25 * 2
    assert plan.total_leaf_mass() == pytest.approx(1.0)


def test_segment_table_path_fluxes():
    p1 = Path(vertices=np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]), mass=0.3)
    p2 = Path(vertices=np.array([[0.0, 0.0], [0.0, 1.0]]), mass=0.7)
    table = segment_table(PathPlan(paths=(p1, p2)))
    assert table.size == 3
    np.testing.assert_array_equal(table.owner, [0, 0, 1])
    np.testing.assert_array_equal(table.interval, [0, 1, 0])
    np.testing.assert_allclose(table.flux, [0.3, 0.3, 0.7])
    np.testing.assert_allclose(table.length, [0.5, 0.5, 1.0])
    np.testing.assert_array_equal(table.group_starts, [0, 2])
    np.testing.assert_allclose(table.midpoint[0], [0.25, 0.0])


def test_segment_table_branch_fluxes_decrease_outward():
    # uniform density 1 on two unit intervals: flux seen by the first
    # midpoint is 0.5 + 1 = 1.5, by the second 0.5
    b = Branch(x=np.array([0.0, 1.0, 2.0]), y=np.array([0.0, 0.0, 0.0]), m=np.array([1.0, 1.0]))
    table = segment_table(BranchPlan(branches=(b,)))
    np.testing.assert_allclose(table.flux, [1.5, 0.5])
    assert np.all(np.diff(table.flux) < 0.0)


def test_half_circle_targets_geometry():
    t = half_circle_targets(5, radius=2.0, total_mass=1.5)
    assert len(t.positions) == 5
    np.testing.assert_allclose(np.hypot(t.positions[:, 0], t.positions[:, 1]), 2.0)
    assert t.total_mass == pytest.approx(1.5)
    assert np.all(t.positions[:, 1] >= -1e-12)


def test_build_star_plan_reaches_atoms():
    targets = half_circle_targets(7)
    plan = build_star_plan(targets, segments_per_path=4)
    assert len(plan.paths) == 7
    for path, pos, mass in zip(plan.paths, targets.positions, targets.masses):
        assert path.segments == 4
        np.testing.assert_allclose(path.vertices[-1], pos, atol=1e-12)
        assert path.mass == pytest.approx(mass)
        assert path.terminal_fixed


def test_build_fan_branches_single_is_vertical():
    plan = build_fan_branches(1, segments=3, m_init=0.2)
    b = plan.branches[0]
    np.testing.assert_allclose(b.x, 0.0, atol=1e-12)
    assert b.y[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(b.m, 0.2)


def test_build_fan_branches_spread():
    plan = build_fan_branches(11, spread_angle=np.pi / 2, length0=1.0, segments=10)
    assert len(plan.branches) == 11
    tips = np.array([[b.x[-1], b.y[-1]] for b in plan.branches])
    np.testing.assert_allclose(np.hypot(tips[:, 0], tips[:, 1]), 1.0, atol=1e-12)
    angles = np.arctan2(tips[:, 1], tips[:, 0])
    np.testing.assert_allclose(angles.max() - angles.min(), np.pi / 2, atol=1e-12)


def test_extract_topology_merges_shared_trunk():
    trunk = np.array([[0.0, 0.0], [0.0, 0.5]])
    a = Path(vertices=np.vstack([trunk, [[-0.5, 1.0]]]), mass=0.4)
    b = Path(vertices=np.vstack([trunk, [[0.5, 1.0]]]), mass=0.6)
    topo = extract_topology(PathPlan(paths=(a, b)), merge_tol=1e-9)
    assert len(topo.nodes) == 4
    flux_by_edge = {(p, c): f for p, c, _, f in topo.edges}
    assert flux_by_edge[(0, 1)] == pytest.approx(1.0)
    assert sorted(topo.leaves.values()) == pytest.approx([0.4, 0.6])
    assert topo.subtree_mass(1) == pytest.approx(1.0)


def test_extract_topology_rejects_doubling_back():
    bad = Path(vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]), mass=1.0)
    with pytest.raises(TopologyError, match="doubles back"):
        extract_topology(PathPlan(paths=(bad,)), merge_tol=1e-6)


def test_extract_topology_negative_tolerance():
    p = Path(vertices=np.array([[0.0, 0.0], [1.0, 0.0]]), mass=1.0)
    with pytest.raises(ValueError):
        extract_topology(PathPlan(paths=(p,)), merge_tol=-1.0)


def test_crossing_cluster_count_star_vs_merged():
    targets = half_circle_targets(9)
    star = build_star_plan(targets, segments_per_path=8)
    assert crossing_cluster_count(star, radius=0.2, tol=0.01) == 9
    # two bundles sharing trunks cross the circle at two points only
    trunk_l = np.array([[0.0, 0.0], [-0.3, 0.3]])
    trunk_r = np.array([[0.0, 0.0], [0.3, 0.3]])
    paths = []
    for k in range(3):
        paths.append(Path(vertices=np.vstack([trunk_l, [[-1.0, 0.5 + 0.2 * k]]]), mass=0.1))
        paths.append(Path(vertices=np.vstack([trunk_r, [[1.0, 0.5 + 0.2 * k]]]), mass=0.1))
    assert crossing_cluster_count(PathPlan(paths=tuple(paths)), radius=0.2, tol=0.05) == 2


def test_crossing_cluster_count_skips_short_paths():
    short = Path(vertices=np.array([[0.0, 0.0], [0.05, 0.0]]), mass=1.0)
    assert crossing_cluster_count(PathPlan(paths=(short,)), radius=0.2) == 0


def test_plan_json_round_trip_paths(tmp_path):
    targets = half_circle_targets(4)
    plan = build_star_plan(targets, segments_per_path=3)
    f = tmp_path / "plan.json"
    save_plan(plan, str(f))
    data = json.loads(f.read_text())
    again = load_plan(str(f))
    assert isinstance(again, PathPlan)
    assert "paths" in data
    for p, q in zip(plan.paths, again.paths):
        np.testing.assert_array_equal(p.vertices, q.vertices)
        assert p.mass == q.mass
        assert p.terminal_fixed == q.terminal_fixed


def test_plan_json_round_trip_branches(tmp_path):
    plan = build_fan_branches(3, segments=4, m_init=0.3)
    f = tmp_path / "plan.json"
    save_plan(plan, str(f))
    again = load_plan(str(f))
    assert isinstance(again, BranchPlan)
    for b, c in zip(plan.branches, again.branches):
        np.testing.assert_array_equal(b.x, c.x)
        np.testing.assert_array_equal(b.y, c.y)
        np.testing.assert_array_equal(b.m, c.m)


def test_plan_from_dict_rejects_unknown_kind():
    with pytest.raises(ValueError):
        plan_from_dict({"kind": "mesh"})


def test_plan_to_dict_is_json_serializable():
    plan = build_star_plan(half_circle_targets(3), segments_per_path=2)
    text = json.dumps(plan_to_dict(plan))
    assert "paths" in text


def test_saturated_pair_plans_lengths_and_eps():
    l1, l2, delta, width = 4.0, 0.1, 0.1, 0.1
    short, long_detour, eps = saturated_pair_plans(l1=l1, l2=l2, delta=delta, width=width)
    scale = width / l2

    def path_len(p):
        seg = np.diff(p.vertices, axis=0)
        return np.hypot(seg[:, 0], seg[:, 1]).sum()

    for plan, short_len in ((short, scale * l2), (long_detour, scale * (l2 + delta))):
        lens = sorted(path_len(p) for p in plan.paths)
        assert lens[0] == pytest.approx(short_len, abs=1e-12)
        assert lens[1] == pytest.approx(scale * l1, abs=1e-9)
        # both paths end at the same terminal
        t0 = plan.paths[0].vertices[-1]
        t1 = plan.paths[1].vertices[-1]
        np.testing.assert_allclose(t0, t1, atol=1e-12)
    diam = max(short.diameter(), long_detour.diameter())
    assert eps == pytest.approx(10.0 * diam)


def test_random_branch_plan_is_valid_and_reproducible():
    for seed in range(20):
        plan1 = random_branch_plan(np.random.default_rng(seed))
        plan2 = random_branch_plan(np.random.default_rng(seed))
        assert 1 <= len(plan1.branches) <= 4
        for b1, b2 in zip(plan1.branches, plan2.branches):
            np.testing.assert_array_equal(b1.x, b2.x)
            np.testing.assert_array_equal(b1.y, b2.y)
            np.testing.assert_array_equal(b1.m, b2.m)
            assert 1 <= b1.segments <= 6
            assert np.all(b1.m >= 0.0)
            assert np.all(b1.y >= 0.0)
