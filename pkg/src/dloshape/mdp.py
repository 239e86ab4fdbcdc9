"""Goal-conditioned MDP encodings for planar rope shape control.

The state a controller sees is an ordered chain of N planar points plus the
two end-effector poses.  Goals are chains of the same size.  Everything here
is a pure function over small value types, so the module is safe to use from
any thread.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

SHAPE_POINTS = 18
INPUT_DIM = 4 * SHAPE_POINTS + 6  # goal + current shape + two poses
ACTION_DIM = 6


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]; values already in range pass through untouched."""
    if -math.pi < a <= math.pi:
        return a
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class GripperPose:
    """Planar position plus orientation angle of one end-effector."""

    x: float
    y: float
    theta: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @staticmethod
    def from_array(a) -> "GripperPose":
        a = np.asarray(a, dtype=float)
        return GripperPose(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Shape:
    """Ordered chain of planar points describing the rope or a goal."""

    points: np.ndarray  # (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DimensionError(f"shape points must be (N, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DimensionError("shape contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def flat(self) -> np.ndarray:
        """Row-major flattening (x0, y0, x1, y1, ...)."""
        return self.points.reshape(-1).copy()

    @staticmethod
    def from_flat(v) -> "Shape":
        v = np.asarray(v, dtype=float)
        return Shape(v.reshape(-1, 2))

    def translated(self, dx: float, dy: float) -> "Shape":
        return Shape(self.points + np.array([dx, dy]))


@dataclass(frozen=True)
class Observation:
    """Current rope shape plus the two gripper poses."""

    shape: Shape
    left: GripperPose
    right: GripperPose

    # Loose sanity coupling: the chain endpoints must sit at the grippers.
    _COUPLING_TOL = 0.02

    def __post_init__(self):
        d0 = float(np.linalg.norm(self.shape.points[0] - self.left.position))
        d1 = float(np.linalg.norm(self.shape.points[-1] - self.right.position))
        if d0 > self._COUPLING_TOL or d1 > self._COUPLING_TOL:
            raise DimensionError(
                f"shape endpoints detached from grippers ({d0:.4f} m, {d1:.4f} m)"
            )


@dataclass(frozen=True)
class Action:
    """Absolute desired poses for both end-effectors (6 scalars)."""

    left: GripperPose
    right: GripperPose

    def as_array(self) -> np.ndarray:
        """Layout [p_left(2), p_right(2), o_left, o_right]."""
        return np.array(
            [self.left.x, self.left.y, self.right.x, self.right.y,
             self.left.theta, self.right.theta]
        )

    @staticmethod
    def from_array(a) -> "Action":
        a = np.asarray(a, dtype=float)
        if a.shape != (ACTION_DIM,):
            raise DimensionError(f"action must have {ACTION_DIM} scalars, got {a.shape}")
        return Action(
            left=GripperPose(float(a[0]), float(a[1]), float(a[4])),
            right=GripperPose(float(a[2]), float(a[3]), float(a[5])),
        )


@dataclass(frozen=True)
class Workspace:
    """Safe planar workspace: shared x band, disjoint y bands, tilt range."""

    x_range: tuple = (0.3, 0.6)
    y_left: tuple = (0.1, 0.3)
    y_right: tuple = (-0.3, -0.1)
    theta_range: tuple = (-math.pi / 4, math.pi / 4)

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_left, self.y_right, self.theta_range):
            if not lo < hi:
                raise DimensionError("workspace ranges must be non-empty")
        if self.y_left[0] < self.y_right[1]:
            raise DimensionError("left/right y bands must be disjoint")

    def arm_bounds(self, side: str) -> tuple:
        """((xmin, xmax), (ymin, ymax), (tmin, tmax)) for one arm."""
        y = self.y_left if side == "left" else self.y_right
        return (self.x_range, y, self.theta_range)

    def contains(self, pose: GripperPose, side: str, margin: float = 0.0) -> bool:
        """Margin inflates each range by the given fraction of its span."""
        for val, (lo, hi) in zip(
            (pose.x, pose.y, pose.theta), self.arm_bounds(side)
        ):
            pad = margin * (hi - lo)
            if not (lo - pad <= val <= hi + pad):
                return False
        return True

    def clip_pose(self, pose: GripperPose, side: str) -> GripperPose:
        (xr, yr, tr) = self.arm_bounds(side)
        return GripperPose(
            float(np.clip(pose.x, *xr)),
            float(np.clip(pose.y, *yr)),
            float(np.clip(pose.theta, *tr)),
        )

    def sample_pose(self, side: str, rng: np.random.Generator) -> GripperPose:
        (xr, yr, tr) = self.arm_bounds(side)
        return GripperPose(
            float(rng.uniform(*xr)), float(rng.uniform(*yr)), float(rng.uniform(*tr))
        )


def reward(goal: Shape, current: Shape) -> float:
    """Negative RMSE between two chains: -sqrt(mean_j ||g_j - c_j||^2)."""
    if goal.n != current.n:
        raise DimensionError(f"point counts differ: {goal.n} vs {current.n}")
    diff = goal.points - current.points
    return -math.sqrt(float(np.mean(np.sum(diff * diff, axis=1))))


def encode_input(goal: Shape, obs: Observation) -> np.ndarray:
    """Network input: goal chain, then current chain, positions, angles.

    Layout: [goal(2N) | shape(2N) | p_left(2) | p_right(2) | o_left | o_right].
    """
    if goal.n != obs.shape.n:
        raise DimensionError(f"goal has {goal.n} points, observation {obs.shape.n}")
    return np.concatenate(
        [
            goal.flat(),
            obs.shape.flat(),
            [obs.left.x, obs.left.y],
            [obs.right.x, obs.right.y],
            [obs.left.theta],
            [obs.right.theta],
        ]
    )


def decode_input(vec: np.ndarray, n_points: int = SHAPE_POINTS) -> tuple:
    """Inverse of encode_input; returns (goal, observation)."""
    vec = np.asarray(vec, dtype=float)
    expected = 4 * n_points + 6
    if vec.shape != (expected,):
        raise DimensionError(f"encoded input must have length {expected}, got {vec.shape}")
    m = 2 * n_points
    goal = Shape.from_flat(vec[:m])
    shape = Shape.from_flat(vec[m:2 * m])
    p = vec[2 * m:]
    obs = Observation(
        shape=shape,
        left=GripperPose(float(p[0]), float(p[1]), float(p[4])),
        right=GripperPose(float(p[2]), float(p[3]), float(p[5])),
    )
    return goal, obs


def clip_action(a: Action, w: Workspace) -> Action:
    """Clamp each action component to its workspace range."""
    return Action(
        left=w.clip_pose(a.left, "left"),
        right=w.clip_pose(a.right, "right"),
    )


def action_bounds(w: Workspace) -> tuple:
    """Per-component (low, high) arrays in Action.as_array layout."""
    low = np.array(
        [w.x_range[0], w.y_left[0], w.x_range[0], w.y_right[0],
         w.theta_range[0], w.theta_range[0]]
    )
    high = np.array(
        [w.x_range[1], w.y_left[1], w.x_range[1], w.y_right[1],
         w.theta_range[1], w.theta_range[1]]
    )
    return low, high
