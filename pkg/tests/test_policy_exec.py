"""Policy interpreter: transform math, sandboxing, budget, determinism."""

import math

import numpy as np
import pytest

from oracles import gaussian_falloff_weights

from ovita.model import Scene, SceneObject, Trajectory, flatten
from ovita.policy import (
    BudgetExceeded,
    PolicyRuntimeError,
    RuntimeKind,
    builtin_transforms,
    execute,
    parse,
)


def traj(rows):
    return Trajectory.from_rows(rows)


def run(src, trajectory, scene=None, budget=1_000_000):
    return execute(parse(src), trajectory, scene or Scene(), budget=budget)


BASE = traj([[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 1], [3, 0, 0, 1]])


def rows_of(result):
    return [[w.x, w.y, w.z, w.v] for w in result.trajectory.waypoints]


# ---------------------------------------------------------------- transforms


def test_translate_axis_shifts_exactly():
    out = run('translate(axis="x", by=0.2);', BASE)
    for before, after in zip(BASE.waypoints, out.trajectory.waypoints):
        assert after.x == before.x + 0.2  # bit-exact, no tolerance
        assert after.y == before.y
        assert after.z == before.z
        assert after.v == before.v


def test_translate_vector_form():
    out = run("translate(vector=[0.5, -0.25, 1]);", BASE)
    got = rows_of(out)
    assert got[0] == [0.5, -0.25, 1.0, 1.0]
    assert got[3] == [3.5, -0.25, 1.0, 1.0]


def test_translate_composition_is_exact():
    # dyadic shifts on integer coordinates make float addition associative,
    # so the composition law holds bitwise
    a, b = 0.25, 0.5
    two = run(f"translate(axis=\"y\", by={a}); translate(axis=\"y\", by={b});", BASE)
    one = run(f"translate(axis=\"y\", by={a + b});", BASE)
    assert rows_of(two) == rows_of(one)


def test_translate_range_touches_only_span():
    out = run("translate_range(1, 2, [0, 0, 5]);", BASE)
    got = rows_of(out)
    assert [r[2] for r in got] == [0.0, 5.0, 5.0, 0.0]


def test_scale_speed_factor_halves():
    out = run("scale_speed(0.5);", BASE)
    assert [w.v for w in out.trajectory.waypoints] == [0.5, 0.5, 0.5, 0.5]


def test_scale_speed_constant_profile_uses_mean():
    t = traj([[0, 0, 0, 0.5], [1, 0, 0, 1.0], [2, 0, 0, 1.5], [3, 0, 0, 2.0]])
    out = run('scale_speed(profile="constant");', t)
    assert [w.v for w in out.trajectory.waypoints] == [1.25] * 4


def test_scale_speed_linear_ramp_defaults():
    t = traj([[0, 0, 0, 2.0], [1, 0, 0, 0.3], [2, 0, 0, 0.9], [3, 0, 0, 1.0]])
    out = run('scale_speed(profile="linear_ramp");', t)
    # from v_0 = 2 down to 0
    np.testing.assert_allclose(
        [w.v for w in out.trajectory.waypoints], [2.0, 2.0 * 2 / 3, 2.0 / 3, 0.0]
    )


def test_scale_speed_trapezoidal_hand_computed():
    out = run('scale_speed(profile="trapezoidal");', BASE)
    # mean v = 1, peak = 1.5; t = 0, 1/3, 2/3, 1
    np.testing.assert_allclose([w.v for w in out.trajectory.waypoints], [0.0, 1.5, 1.5, 0.0])


def test_approach_gaussian_weights_match_independent_recomputation():
    scene = Scene(objects=(SceneObject("cup", (1.0, 0.8, 0.0), (0.1, 0.1, 0.2)),))
    src = 'approach(label="cup", offset=0.1, falloff="gaussian", sigma=0.3);'
    out = run(src, BASE, scene)

    positions = np.array([[w.x, w.y, w.z] for w in BASE.waypoints])
    center = np.array([1.0, 0.8, 0.0])
    weights = gaussian_falloff_weights(positions, center, 0.3)
    for i, (before, after) in enumerate(zip(positions, rows_of(out))):
        d = np.linalg.norm(before - center)
        target = center + 0.1 * (before - center) / d
        expected = before + weights[i] * (target - before)
        np.testing.assert_allclose(after[:3], expected, atol=1e-15)


def test_retreat_moves_away_by_offset():
    scene = Scene(objects=(SceneObject("cup", (0.0, 0.0, 0.0), (0.1, 0.1, 0.1)),))
    t = traj([[1, 0, 0, 1], [2, 0, 0, 1]])
    out = run('retreat(label="cup", offset=0.5, falloff="none", sigma=1);', t, scene)
    got = rows_of(out)
    np.testing.assert_allclose(got[0][:3], [1.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(got[1][:3], [2.5, 0, 0], atol=1e-15)


def test_approach_leaves_point_at_center_alone():
    scene = Scene(objects=(SceneObject("cup", (0.0, 0.0, 0.0), (0.1, 0.1, 0.1)),))
    t = traj([[0, 0, 0, 1], [2, 0, 0, 1]])
    out = run('approach(label="cup", offset=0.5, falloff="none", sigma=1);', t, scene)
    assert rows_of(out)[0][:3] == [0.0, 0.0, 0.0]


def test_insert_pause_duplicates_position_with_zero_speed():
    out = run("insert_pause(index=1, steps=10);", BASE)
    got = rows_of(out)
    assert len(got) == len(BASE) + 10
    for r in got[2:12]:
        assert r == [1.0, 0.0, 0.0, 0.0]
    assert got[0] == [0, 0, 0, 1] and got[1] == [1, 0, 0, 1]
    assert got[12:] == [[2, 0, 0, 1], [3, 0, 0, 1]]


def test_insert_spiral_locality_and_geometry():
    out = run("insert_spiral(center_index=1, radius=0.2, turns=2, points=8);", BASE)
    got = rows_of(out)
    assert len(got) == len(BASE) + 8
    # removal restores the original exactly
    assert got[:2] + got[10:] == [[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 1], [3, 0, 0, 1]]
    base = np.array([1.0, 0.0, 0.0])
    for k, r in enumerate(got[2:10]):
        radius = 0.2 * (k + 1) / 8
        theta = 2 * math.pi * 2 * k / 8
        np.testing.assert_allclose(
            r, [base[0] + radius * math.cos(theta), base[1] + radius * math.sin(theta), 0.0, 1.0],
            atol=1e-15,
        )


def test_zigzag_zero_amplitude_is_identity():
    out = run("zigzag(amplitude=0, period=4);", BASE)
    assert rows_of(out) == [[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 1], [3, 0, 0, 1]]


def test_zigzag_displaces_perpendicular_to_tangent():
    out = run("zigzag(amplitude=0.1, period=4);", BASE)
    got = rows_of(out)
    # tangent is +x everywhere, perpendicular is +y; x, z, v unchanged
    for i, r in enumerate(got):
        assert r[0] == float(i)
        assert r[2] == 0.0 and r[3] == 1.0
        assert r[1] == pytest.approx(0.1 * math.sin(2 * math.pi * i / 4), abs=1e-15)


def test_resample_straight_line_uniform():
    out = run("resample(7);", BASE)
    got = rows_of(out)
    assert len(got) == 7
    np.testing.assert_allclose([r[0] for r in got], np.linspace(0, 3, 7), atol=1e-12)
    assert got[0] == [0, 0, 0, 1] and got[-1] == [3, 0, 0, 1]


def test_resample_degenerate_polyline():
    t = traj([[1, 1, 1, 2], [1, 1, 1, 0]])
    out = run("resample(4);", t)
    got = rows_of(out)
    assert len(got) == 4
    for r in got:
        assert r[:3] == [1.0, 1.0, 1.0]
    np.testing.assert_allclose([r[3] for r in got], [2.0, 4 / 3, 2 / 3, 0.0])


def test_set_goal_blend_zero_moves_only_last():
    out = run("set_goal([3, 1, 0], blend=0);", BASE)
    got = rows_of(out)
    assert got[:3] == [[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 1]]
    assert got[3] == [3.0, 1.0, 0.0, 1.0]


def test_set_goal_blend_one_translates_rigidly():
    out = run("set_goal([3, 1, 0], blend=1);", BASE)
    got = rows_of(out)
    for i, r in enumerate(got):
        assert r == [float(i), 1.0, 0.0, 1.0]


def test_set_goal_blend_is_monotone_ramp():
    out = run("set_goal([3, 3, 0], blend=0.5);", BASE)
    ys = [r[1] for r in rows_of(out)]
    assert ys[0] == 0.0
    assert ys[-1] == pytest.approx(3.0)
    assert all(b >= a for a, b in zip(ys, ys[1:]))


def test_set_waypoint_speed_and_position():
    out = run("set_waypoint_position(2, [9, 9, 9]); set_waypoint_speed(0, 0.25);", BASE)
    got = rows_of(out)
    assert got[2][:3] == [9.0, 9.0, 9.0]
    assert got[0][3] == 0.25


# ------------------------------------------------------------------- queries


def test_queries_reflect_scene_and_trajectory():
    scene = Scene(
        objects=(
            SceneObject("cup", (1.0, 0.0, 0.0), (0.1, 0.1, 0.2)),
            SceneObject("table", (0.0, -0.5, 0.0), (2.0, 1.0, 0.05)),
        )
    )
    src = (
        "let names = detect_objects();\n"
        "let c = object_center(names[0]);\n"
        "let near = nearest_waypoint(names[0]);\n"
        "translate(vector=[near, c[1], length(names)]);\n"
    )
    out = run(src, BASE, scene)
    got = rows_of(out)
    # nearest waypoint to (1,0,0) is index 1; center y = 0; two objects
    assert got[0] == [1.0, 0.0, 2.0, 1.0]


def test_nearest_waypoint_tie_takes_lowest_index():
    scene = Scene(objects=(SceneObject("mid", (1.5, 0.0, 0.0), (0.1, 0.1, 0.1)),))
    src = "let i = nearest_waypoint(\"mid\"); set_waypoint_speed(i, 0);"
    out = run(src, BASE, scene)
    assert rows_of(out)[1][3] == 0.0  # waypoints 1 and 2 tie at distance 0.5


def test_get_trajectory_and_dimensions():
    scene = Scene(objects=(SceneObject("cup", (0, 0, 0), (0.2, 0.4, 0.4)),))
    src = (
        "let t = get_trajectory();\n"
        "let d = object_dimensions(\"cup\");\n"
        "translate(vector=[t[0][3], d[1], waypoint_speed(3)]);\n"
    )
    out = run(src, BASE, scene)
    assert rows_of(out)[0] == [1.0, 0.4, 1.0, 1.0]


# --------------------------------------------------------------- sandboxing


def test_unknown_object_label():
    with pytest.raises(PolicyRuntimeError) as err:
        run('approach(label="bowl", offset=0.1);', BASE, Scene())
    assert err.value.kind is RuntimeKind.UNKNOWN_OBJECT_LABEL
    assert "bowl" in str(err.value)


def test_division_by_zero_carries_location():
    with pytest.raises(PolicyRuntimeError) as err:
        run("let x = 1;\nlet y = x / (x - 1);", BASE)
    assert err.value.kind is RuntimeKind.DIVISION_BY_ZERO
    assert "line 2" in err.value.location


def test_index_out_of_range():
    with pytest.raises(PolicyRuntimeError) as err:
        run("let p = waypoint_position(99);", BASE)
    assert err.value.kind is RuntimeKind.INDEX_OUT_OF_RANGE


def test_unknown_function_suggests_nearest():
    with pytest.raises(PolicyRuntimeError) as err:
        run("translate_al(vector=[1, 0, 0]);", BASE)
    assert err.value.kind is RuntimeKind.UNKNOWN_FUNCTION
    assert "translate" in str(err.value)


def test_unknown_variable():
    with pytest.raises(PolicyRuntimeError) as err:
        run("let x = y + 1;", BASE)
    assert err.value.kind is RuntimeKind.UNKNOWN_VARIABLE


def test_sqrt_of_negative_is_structured():
    with pytest.raises(PolicyRuntimeError) as err:
        run("let x = sqrt(-1);", BASE)
    assert err.value.kind is RuntimeKind.NON_FINITE


def test_overflowing_arithmetic_is_structured():
    with pytest.raises(PolicyRuntimeError) as err:
        run("let x = pow(10, 300) * pow(10, 300);", BASE)
    assert err.value.kind is RuntimeKind.NON_FINITE


def test_condition_must_be_boolean():
    with pytest.raises(PolicyRuntimeError) as err:
        run("if 1 { let x = 2; }", BASE)
    assert err.value.kind is RuntimeKind.TYPE_MISMATCH


def test_bad_keyword_argument():
    with pytest.raises(PolicyRuntimeError) as err:
        run("translate(sideways=1);", BASE)
    assert err.value.kind is RuntimeKind.INVALID_ARGUMENT
    assert "translate" in str(err.value)
    assert "t_translate" not in str(err.value)


def test_too_many_waypoints_rejected():
    with pytest.raises(PolicyRuntimeError) as err:
        run("insert_pause(index=0, steps=150000);", BASE)
    assert err.value.kind is RuntimeKind.OUTPUT_TOO_LARGE


def test_negative_speed_clamped_with_trace_note():
    out = run("scale_speed(-1);", BASE)
    assert all(w.v == 0.0 for w in out.trajectory.waypoints)
    assert any("clamped" in desc for _, desc in out.trace)


# ------------------------------------------------------- budget, determinism


def test_budget_exhaustion_is_clean():
    src = "for i in 0..100000000 { let x = 1; }"
    with pytest.raises(BudgetExceeded):
        run(src, BASE, budget=1000)
    # the input trajectory object is untouched
    assert [w.v for w in BASE.waypoints] == [1, 1, 1, 1]


def test_budget_not_exceeded_reports_steps():
    out = run("let x = 1; translate(axis=\"x\", by=x);", BASE, budget=50)
    assert 0 < out.steps_used <= 50


def test_loop_work_within_budget():
    src = "for i in 0..num_waypoints() { set_waypoint_speed(i, 2); }"
    out = run(src, BASE)
    assert [w.v for w in out.trajectory.waypoints] == [2.0] * 4
    assert out.steps_used <= 1_000_000


def test_deterministic_execution():
    scene = Scene(objects=(SceneObject("cup", (1, 1, 0), (0.1, 0.1, 0.2)),))
    src = (
        'let w = noise(42);\n'
        'translate(vector=[w, 0, 0]);\n'
        'approach(label="cup", offset=0.2, sigma=0.5);\n'
    )
    a = run(src, BASE, scene)
    b = run(src, BASE, scene)
    assert np.array_equal(flatten(a.trajectory), flatten(b.trajectory))
    assert a.trace == b.trace
    assert a.steps_used == b.steps_used


def test_noise_requires_explicit_seed():
    with pytest.raises(PolicyRuntimeError) as err:
        run("let x = noise();", BASE)
    assert err.value.kind is RuntimeKind.INVALID_ARGUMENT


def test_noise_seed_determines_value():
    out1 = run("translate(axis=\"x\", by=noise(7));", BASE)
    out2 = run("translate(axis=\"x\", by=noise(7));", BASE)
    out3 = run("translate(axis=\"x\", by=noise(8));", BASE)
    assert rows_of(out1) == rows_of(out2)
    assert rows_of(out1) != rows_of(out3)


def test_trace_records_transforms_in_order():
    out = run("translate(axis=\"z\", by=1); scale_speed(2);", BASE)
    descs = [d for _, d in out.trace]
    assert descs == ['translate(axis="z", by=1)', "scale_speed(2)"]
    steps = [s for s, _ in out.trace]
    assert steps == sorted(steps)


# ------------------------------------------------------------------- catalog


def test_catalog_covers_required_transforms():
    names = {info.name for info in builtin_transforms()}
    required = {
        "translate", "translate_range", "scale_speed", "approach", "retreat",
        "insert_spiral", "insert_pause", "zigzag", "resample", "set_goal",
    }
    assert required <= names


def test_catalog_entries_document_math():
    for info in builtin_transforms():
        assert info.signature
        assert len(info.doc) > 10
        assert info.kind in ("transform", "query", "math")
