import itertools
import math

import numpy as np
import pytest

from wristkit.errors import DegenerateInput, GridMismatch
from wristkit.geom import Pose, rotation_from_axis_angle
from wristkit.kinematics import load_robot
from wristkit.workspace import (
    COLLISION, IK_FAILURE, REACHABLE, SELF_COLLISION, STATUS_RGB, CollisionChecker, GridSpec, Obstacle,
    ReachabilityResult, Scene, cabinet_scene, capsule_box_distance, capsule_capsule_distance,
    compare_workspaces, empty_scene, heatmap_ppm, ik_seeds, improvement_pct, load_scene,
    point_reachable, reachability_grid,
)

from oracles import brute_segment_distance, mc_capsule_hits_box, random_capsule_box_pair

UNIT_BOX = Obstacle("b", Pose(), [0.5, 0.5, 0.5])


def test_capsule_box_hand_cases():
    # parallel to a face, 1 m above its centre
    assert capsule_box_distance([-0.2, 0, 1.5], [0.2, 0, 1.5], 0.1, UNIT_BOX) == pytest.approx(0.9)
    # pointing at a corner along the diagonal
    c = np.array([0.5, 0.5, 0.5])
    u = np.ones(3) / math.sqrt(3)
    assert capsule_box_distance(c + u, c + 2 * u, 0.0, UNIT_BOX) == pytest.approx(1.0)
    # segment passing straight through the box: depth = half extent + radius
    assert capsule_box_distance([-2, 0, 0], [2, 0, 0], 0.1, UNIT_BOX) == pytest.approx(-0.6)
    # endpoint inside, nearest face 0.1 away
    assert capsule_box_distance([0.4, 0, 0], [0.4, 0, 0], 0.0, UNIT_BOX) == pytest.approx(-0.1)


def test_capsule_box_rotated_box():
    box = Obstacle("r", Pose(rotation_from_axis_angle([0, 0, 1], math.pi / 4), [0, 0, 0]), [0.5, 0.5, 0.5])
    # the box corner now points along +x at sqrt(0.5)
    assert capsule_box_distance([1.0, 0, 0], [1.0, 0, 0.2], 0.0, box) == pytest.approx(1 - math.sqrt(0.5))


def test_capsule_box_agrees_with_monte_carlo():
    rng = np.random.default_rng(30)
    for _ in range(200):
        p0, p1, r, box = random_capsule_box_pair(rng)
        d = capsule_box_distance(p0, p1, r, box)
        if abs(d) < 1e-3:
            continue
        assert (d < 0) == mc_capsule_hits_box(p0, p1, r, box, rng)


def test_capsule_capsule_matches_brute_force():
    rng = np.random.default_rng(31)
    for _ in range(100):
        a0, a1, b0, b1 = rng.normal(size=(4, 3))
        exact = capsule_capsule_distance(a0, a1, 0.1, b0, b1, 0.2)
        assert exact == pytest.approx(brute_segment_distance(a0, a1, b0, b1) - 0.3, abs=2e-6)
        assert exact <= brute_segment_distance(a0, a1, b0, b1) - 0.3 + 1e-12
    # parallel and degenerate segments
    assert capsule_capsule_distance([0, 0, 0], [1, 0, 0], 0, [0, 1, 0], [1, 1, 0], 0) == pytest.approx(1.0)
    assert capsule_capsule_distance([0, 0, 0], [0, 0, 0], 0, [2, 0, 0], [2, 0, 0], 0) == pytest.approx(2.0)


@pytest.mark.parametrize("name", ["agilex_serial", "agilex_dexwrist"])
def test_self_pairs_match_enumeration(name):
    m = load_robot(name)
    frame = {n: i for i, n in enumerate(m.link_names)}
    ignore = {frozenset(p) for p in m.collision_ignore}
    expect = [(a.name, b.name) for a, b in itertools.combinations(m.capsules, 2)
              if abs(frame[a.link] - frame[b.link]) > 1 and frozenset((a.link, b.link)) not in ignore]
    assert CollisionChecker(m).self_pairs == expect


def test_self_collision_matches_brute_force():
    m = load_robot("agilex_serial")
    chk = CollisionChecker(m)
    pairs = set(chk.self_pairs)
    names = [c.name for c in m.capsules]
    lo, hi = m.limits
    rng = np.random.default_rng(32)
    hits = 0
    for _ in range(300):
        q = rng.uniform(lo, hi)
        segs = chk.world_capsules(q)
        worst = min(
            brute_segment_distance(*segs[i], *segs[j]) - m.capsules[i].radius - m.capsules[j].radius
            for i, j in itertools.combinations(range(len(names)), 2) if (names[i], names[j]) in pairs)
        if abs(worst) < 1e-4:
            continue
        rep = chk.check(q)
        assert (rep.kind == SELF_COLLISION) == (worst < 0)
        hits += worst < 0
    assert hits > 0


def test_home_pose_collision_free(agilex_serial, agilex_dex):
    for m in (agilex_serial, agilex_dex):
        assert not CollisionChecker(m, load_scene("cabinet")).check(m.home).colliding


def test_obstacle_inflation_and_contains():
    ob = Obstacle("o", Pose.from_translation([1, 0, 0]), [0.1, 0.1, 0.1])
    assert ob.contains([[1.05, 0, 0]])[0] and not ob.contains([[1.15, 0, 0]])[0]
    assert ob.inflated(0.05).contains([[1.15, 0, 0]])[0]
    with pytest.raises(DegenerateInput):
        Obstacle("bad", Pose(), [0.1, 0.0, 0.1])


def test_grid_ordering_x_fastest():
    g = GridSpec((2, 3, 4), [0, 0, 0], [1, 2, 3])
    pts = g.points()
    assert pts.shape == (24, 3)
    assert np.array_equal(pts[0], [0, 0, 0]) and np.array_equal(pts[1], [1, 0, 0])
    assert np.array_equal(pts[2], [0, 1, 0]) and np.array_equal(pts[6], [0, 0, 1])
    assert np.allclose(g.spacing, [1, 1, 1])


def test_seeds_deterministic_and_within_limits(agilex_dex):
    a, b = ik_seeds(agilex_dex, 0), ik_seeds(agilex_dex, 0)
    assert a.shape == (8, 6) and np.array_equal(a, b)
    assert not np.array_equal(a, ik_seeds(agilex_dex, 1))
    lo, hi = agilex_dex.limits
    assert np.all(a >= lo) and np.all(a <= hi)


@pytest.fixture(scope="module")
def mid_scene():
    return empty_scene((0.3, -0.15, 0.2), (0.45, 0.15, 0.4))


def test_mid_range_points_all_reachable(agilex_dex, mid_scene):
    res = reachability_grid(agilex_dex, mid_scene, GridSpec.over(mid_scene, 3))
    assert res.counts()[REACHABLE] == 27


def test_far_point_is_ik_failure(agilex_dex):
    s = empty_scene()
    assert point_reachable(agilex_dex, s, [3.0, 0, 0]) == IK_FAILURE


def test_point_inside_obstacle_is_collision(agilex_dex, mid_scene):
    target = np.array([0.4, 0.0, 0.3])
    block = Obstacle("block", Pose.from_translation(target), [0.05, 0.05, 0.05])
    assert point_reachable(agilex_dex, mid_scene.with_obstacles([block]), target) == COLLISION


def test_adding_obstacles_never_gains_points(agilex_dex):
    base = empty_scene((0.25, -0.25, 0.2), (0.6, 0.25, 0.6))
    grid = GridSpec.over(base, 4)
    full = cabinet_scene()
    obs = full.obstacles
    masks = []
    for k in (0, 2, len(obs)):
        res = reachability_grid(agilex_dex, base.with_obstacles(obs[:k]), grid)
        masks.append(res.reachable_mask)
    for fewer, more in zip(masks, masks[1:]):
        assert np.all(more <= fewer)


def test_parallel_equals_sequential(agilex_dex):
    s = load_scene("cabinet")
    grid = GridSpec.over(s, 4)
    a = reachability_grid(agilex_dex, s, grid, workers=1)
    b = reachability_grid(agilex_dex, s, grid, workers=2, executor="process")
    c = reachability_grid(agilex_dex, s, grid, workers=3, executor="thread")
    assert a.status == b.status == c.status


def test_grid_density_changes_fraction_little(agilex_dex):
    s = load_scene("cabinet")
    f = [reachability_grid(agilex_dex, s, GridSpec.over(s, n)).reachable_mask.mean() for n in (6, 10)]
    assert abs(f[0] - f[1]) < 0.1


def _fake(robot, statuses, scene="s", counts=(5, 5, 4)):
    return ReachabilityResult(robot, scene, GridSpec(counts, [0, 0, 0], [1, 1, 1]), tuple(statuses))


def test_compare_counts_and_masks():
    n = 100
    a = _fake("a", [REACHABLE] * 100 + [IK_FAILURE] * 0)
    b_status = [REACHABLE] * 100
    b = _fake("b", b_status)
    cmp = compare_workspaces(a, b)
    assert cmp.improvement_pct == 0.0
    assert improvement_pct(100, 188) == 88.0
    assert improvement_pct(0, 5) == math.inf and improvement_pct(0, 0) == 0.0
    a = _fake("a", [REACHABLE] * 50 + [IK_FAILURE] * 50)
    b = _fake("b", [IK_FAILURE] * 10 + [REACHABLE] * 90)
    cmp = compare_workspaces(a, b)
    assert (cmp.count_a, cmp.count_b) == (50, 90)
    assert cmp.improvement_pct == 80.0
    assert int(cmp.gained.sum()) == 50 and int(cmp.lost.sum()) == 10
    with pytest.raises(GridMismatch):
        compare_workspaces(a, _fake("c", [REACHABLE] * 100, scene="other"))
    assert n == len(a.status)


def test_result_json_round_trip():
    r = _fake("a", [REACHABLE, COLLISION, SELF_COLLISION, IK_FAILURE] * 25)
    back = ReachabilityResult.from_json(r.to_json())
    assert back.status == r.status and back.grid.same_as(r.grid)


def test_heatmap_layout():
    statuses = [IK_FAILURE] * 24
    statuses[0] = REACHABLE  # x=0, y=0, z=0 -> bottom-left of first tile
    statuses[2 * 3 + 2] = COLLISION  # x=2, y=2, z=0 -> top-right of first tile
    statuses[12 + 1] = SELF_COLLISION  # x=1, y=0, z=1
    r = ReachabilityResult("a", "s", GridSpec((3, 4, 2), [0, 0, 0], [1, 1, 1]), tuple(statuses))
    data = heatmap_ppm(r)
    header = b"P6\n7 4\n255\n"
    assert data.startswith(header)
    img = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(4, 7, 3)
    assert tuple(img[3, 0]) == STATUS_RGB[REACHABLE]
    assert tuple(img[1, 2]) == STATUS_RGB[COLLISION]
    assert tuple(img[0, 3]) == (0, 0, 0)
    assert tuple(img[3, 5]) == STATUS_RGB[SELF_COLLISION]
    assert tuple(img[0, 4]) == STATUS_RGB[IK_FAILURE]


def test_cabinet_scene_bundled_matches_builder():
    a, b = load_scene("cabinet"), cabinet_scene()
    assert np.allclose(a.interior_lo, b.interior_lo) and np.allclose(a.interior_hi, b.interior_hi)
    assert [o.name for o in a.obstacles] == [o.name for o in b.obstacles]
    # walls stay outside the interior region; the sloped top clips one edge
    pts = GridSpec.over(a, 5).points()
    for ob in a.obstacles:
        inside = ob.contains(pts).mean()
        assert inside < 0.1 if ob.name == "top" else inside == 0


def test_scene_rejects_bad_region():
    with pytest.raises(DegenerateInput):
        Scene("bad", (), [0, 0, 0], [1, 0, 1])
