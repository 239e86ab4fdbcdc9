import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dloshape.errors import DimensionError
from dloshape.mdp import (
    ACTION_DIM,
    INPUT_DIM,
    SHAPE_POINTS,
    Action,
    GripperPose,
    Observation,
    Shape,
    Workspace,
    action_bounds,
    clip_action,
    decode_input,
    encode_input,
    reward,
    wrap_angle,
)


def random_shape(rng, n=SHAPE_POINTS):
    return Shape(rng.uniform(-0.5, 0.5, size=(n, 2)))


def observation_for(shape):
    p0, p1 = shape.points[0], shape.points[-1]
    return Observation(
        shape=shape,
        left=GripperPose(p0[0], p0[1], 0.1),
        right=GripperPose(p1[0], p1[1], -0.2),
    )


class TestReward:
    def test_identical_shapes_zero(self):
        s = random_shape(np.random.default_rng(0))
        assert reward(s, s) == 0.0

    def test_uniform_offset_is_minus_delta(self):
        s = random_shape(np.random.default_rng(1))
        delta = 0.037
        assert reward(s, s.translated(delta, 0.0)) == pytest.approx(-delta, abs=1e-15)

    def test_matches_bruteforce_loop(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b = random_shape(rng), random_shape(rng)
            acc = 0.0
            for (ax, ay), (bx, by) in zip(a.points, b.points):
                acc += (ax - bx) ** 2 + (ay - by) ** 2
            expected = -math.sqrt(acc / a.n)
            assert reward(a, b) == pytest.approx(expected, abs=1e-12)

    def test_mismatched_point_counts_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DimensionError):
            reward(random_shape(rng), random_shape(rng, n=17))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_nonpositive_and_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_shape(rng), random_shape(rng)
        r = reward(a, b)
        assert r <= 0.0
        assert r == reward(b, a)

    @given(st.integers(0, 2**31 - 1),
           st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
    @settings(max_examples=30, deadline=None)
    def test_rigid_translation_invariance(self, seed, dx, dy):
        rng = np.random.default_rng(seed)
        a, b = random_shape(rng), random_shape(rng)
        assert reward(a.translated(dx, dy), b.translated(dx, dy)) == pytest.approx(
            reward(a, b), abs=1e-12
        )

    def test_zero_iff_identical(self):
        rng = np.random.default_rng(4)
        a = random_shape(rng)
        b = Shape(a.points + 1e-9)
        assert reward(a, b) < 0.0


class TestEncoding:
    def test_length_78(self):
        rng = np.random.default_rng(5)
        goal = random_shape(rng)
        obs = observation_for(random_shape(rng))
        assert encode_input(goal, obs).shape == (INPUT_DIM,) == (78,)

    def test_goal_block_first(self):
        rng = np.random.default_rng(6)
        goal = Shape(np.zeros((SHAPE_POINTS, 2)))
        obs = observation_for(random_shape(rng))
        vec = encode_input(goal, obs)
        assert np.all(vec[:36] == 0.0)
        assert not np.all(vec[36:72] == 0.0)

    def test_swap_exchanges_blocks(self):
        rng = np.random.default_rng(7)
        a, b = random_shape(rng), random_shape(rng)
        v1 = encode_input(a, observation_for(b))
        v2 = encode_input(b, observation_for(a))
        assert np.array_equal(v1[:36], v2[36:72])
        assert np.array_equal(v1[36:72], v2[:36])

    def test_row_major_point_order(self):
        pts = np.arange(36, dtype=float).reshape(18, 2)
        goal = Shape(pts)
        obs = observation_for(goal)
        vec = encode_input(goal, obs)
        assert np.array_equal(vec[:36], np.arange(36, dtype=float))

    def test_tail_layout(self):
        rng = np.random.default_rng(8)
        shape = random_shape(rng)
        obs = observation_for(shape)
        vec = encode_input(shape, obs)
        assert vec[72] == obs.left.x and vec[73] == obs.left.y
        assert vec[74] == obs.right.x and vec[75] == obs.right.y
        assert vec[76] == obs.left.theta and vec[77] == obs.right.theta

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_round_trip_exact(self, seed):
        rng = np.random.default_rng(seed)
        goal = random_shape(rng)
        obs = observation_for(random_shape(rng))
        back_goal, back_obs = decode_input(encode_input(goal, obs))
        assert np.array_equal(back_goal.points, goal.points)
        assert np.array_equal(back_obs.shape.points, obs.shape.points)
        assert back_obs.left == obs.left and back_obs.right == obs.right


class TestClipAction:
    def test_in_bounds_unchanged(self):
        w = Workspace()
        a = Action(left=GripperPose(0.4, 0.2, 0.1), right=GripperPose(0.5, -0.2, -0.1))
        assert clip_action(a, w) == a

    def test_left_y_clipped_to_band(self):
        w = Workspace()
        a = Action(left=GripperPose(0.4, 0.5, 0.0), right=GripperPose(0.5, -0.2, 0.0))
        assert clip_action(a, w).left.y == pytest.approx(0.3)

    def test_theta_clipped_to_quarter_pi(self):
        w = Workspace()
        a = Action(left=GripperPose(0.4, 0.2, -math.pi), right=GripperPose(0.5, -0.2, 2.0))
        clipped = clip_action(a, w)
        assert clipped.left.theta == pytest.approx(-math.pi / 4)
        assert clipped.right.theta == pytest.approx(math.pi / 4)

    def test_action_array_round_trip(self):
        a = Action(left=GripperPose(0.4, 0.2, 0.3), right=GripperPose(0.5, -0.15, -0.3))
        assert Action.from_array(a.as_array()) == a

    def test_action_bounds_layout(self):
        low, high = action_bounds(Workspace())
        assert low.shape == (ACTION_DIM,)
        assert low[1] == 0.1 and high[1] == 0.3  # left y band
        assert low[3] == -0.3 and high[3] == -0.1  # right y band


class TestTypes:
    def test_observation_coupling_enforced(self):
        rng = np.random.default_rng(9)
        shape = random_shape(rng)
        with pytest.raises(DimensionError):
            Observation(shape=shape, left=GripperPose(5.0, 5.0, 0.0),
                        right=GripperPose(-5.0, -5.0, 0.0))

    def test_shape_rejects_nonfinite(self):
        pts = np.zeros((18, 2)); pts[3, 1] = np.nan
        with pytest.raises(DimensionError):
            Shape(pts)

    def test_workspace_bands_disjoint(self):
        with pytest.raises(DimensionError):
            Workspace(y_left=(-0.2, 0.3))

    def test_wrap_angle(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
        assert wrap_angle(0.3) == pytest.approx(0.3)
