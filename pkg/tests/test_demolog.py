import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from wristkit.demolog import (
    COLUMNS, DemoEpisode, SummaryStats, bundled_fixture_path, dataset_report, groups_csv,
    load_completion_times, load_dataset, operator_stats, speedup_report, trajectory_length, write_dataset,
)
from wristkit.errors import EmptySelection, MonotonicityViolation, NonPositiveInput, ParseError


def make_episode(eid, t, position, q=None, resets=0, robot="r", task="t", success=True):
    n = len(t)
    q = np.zeros((n, 6)) if q is None else q
    quat = np.tile([1.0, 0, 0, 0], (n, 1))
    return DemoEpisode(eid, np.asarray(t, float), q, np.asarray(position, float), quat, np.zeros(n),
                       resets, success, task, robot)


def test_simple_lengths():
    ep = make_episode("a", [0.0, 2.0], [[0, 0, 0], [0.1, 0, 0]])
    m = trajectory_length(ep)
    assert m.path_length == pytest.approx(0.1) and m.duration == 2.0 and m.joint_path_length == 0
    still = make_episode("s", [1.0, 1.5, 4.0], np.zeros((3, 3)))
    assert trajectory_length(still).path_length == 0 and trajectory_length(still).duration == 3.0


def test_helix_arc_length():
    r, pitch, turns = 0.1, 0.05, 2.0
    s = np.linspace(0, 2 * math.pi * turns, 100)
    pts = np.column_stack([r * np.cos(s), r * np.sin(s), pitch * s / (2 * math.pi)])
    exact = turns * math.hypot(2 * math.pi * r, pitch)
    got = trajectory_length(make_episode("h", np.arange(100.0), pts)).path_length
    assert abs(got - exact) / exact < 0.01
    assert got <= exact


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_path_length_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(20, 3))
    rot = Rotation.random(random_state=seed).as_matrix()
    moved = pts @ rot.T + rng.normal(size=3) * 10
    a = trajectory_length(make_episode("a", np.arange(20.0), pts)).path_length
    b = trajectory_length(make_episode("b", np.arange(20.0), moved)).path_length
    assert a >= 0 and abs(a - b) < 1e-9


def test_episode_invariants():
    with pytest.raises(ParseError):
        make_episode("x", [0.0], [[0, 0, 0]])
    with pytest.raises(MonotonicityViolation):
        make_episode("x", [0.0, 0.0], [[0, 0, 0], [0, 0, 0]])


def test_operator_stats_means():
    ds = [make_episode("a", [0, 10], np.zeros((2, 3)), resets=1),
          make_episode("b", [0, 20], np.zeros((2, 3)), resets=1),
          make_episode("c", [0, 99], np.zeros((2, 3)), robot="other")]
    st_ = operator_stats(ds, "t", "r")
    assert st_.mean_operator_time == 15.0 and st_.mean_resets == 1.0 and st_.episodes == 2
    with pytest.raises(EmptySelection):
        operator_stats(ds, "t", "missing")


def test_bundled_fixture():
    ds = load_dataset(bundled_fixture_path())
    assert [e.episode_id for e in ds] == ["fridge-dex-001", "fridge-base-001"]
    assert operator_stats(ds, "fridge", "agilex_dexwrist").mean_operator_time == pytest.approx(39.5)


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    assert load_dataset(p) == []


def _rows(text_rows):
    return ",".join(COLUMNS) + "\n" + "\n".join(text_rows) + "\n"


def _row(eid, t):
    return f"{eid},{t},0,0,0,0,0,0,0,0,0,1,0,0,0,0,0,1,task,robot"


def test_monotonicity_error_line(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(_rows([_row("a", 0.0), _row("b", 0.0), _row("a", 1.0), _row("a", 0.5)]))
    with pytest.raises(MonotonicityViolation) as info:
        load_dataset(p)
    assert info.value.line == 5


def test_parse_errors_report_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(_rows([_row("a", 0.0), _row("a", "x")]))
    with pytest.raises(ParseError) as info:
        load_dataset(p)
    assert info.value.line == 3
    p.write_text("episode_id,t\n")
    with pytest.raises(ParseError):
        load_dataset(p)


def test_write_read_round_trip(tmp_path):
    ds = load_dataset(bundled_fixture_path())
    p = tmp_path / "rt.csv"
    write_dataset(p, ds)
    back = load_dataset(p)
    for a, b in zip(ds, back):
        assert a.episode_id == b.episode_id and np.array_equal(a.t, b.t) and np.array_equal(a.q, b.q)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.1, 1e3), min_size=2, max_size=40))
def test_stderr_two_pass_oracle(xs):
    n = len(xs)
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / (n - 1)
    s = SummaryStats.from_samples(xs)
    assert s.stderr == pytest.approx(math.sqrt(var) / math.sqrt(n), rel=1e-9, abs=1e-12)
    assert s.minimum <= s.mean <= s.maximum


def test_speedups():
    times = load_completion_times()
    ag = speedup_report(times[("agilex", "serial")], times[("agilex", "dexwrist")])
    ur = speedup_report(times[("ur3e", "serial")], times[("ur3e", "dexwrist")])
    assert ag.ratio == pytest.approx(3.24, abs=0.01)
    assert ur.ratio == pytest.approx(4.92, abs=0.05)
    same = SummaryStats(3, 5.0, 0.1, 4.0, 6.0)
    assert speedup_report(same, same).ratio == 1.0
    with pytest.raises(NonPositiveInput):
        speedup_report(SummaryStats(1, 0.0, 0.0, 0.0, 0.0), same)


def test_report_and_csv():
    rep = dataset_report(load_dataset(bundled_fixture_path()))
    assert len(rep["episodes"]) == 2 and len(rep["groups"]) == 2
    lines = groups_csv(rep).strip().split("\n")
    assert len(lines) == 3 and lines[0].startswith("task,robot")
