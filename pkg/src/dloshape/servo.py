"""Diminishing-rigidity shape servoing baseline.

A gripper's influence on each tracked point decays exponentially with
arc-length distance along the rope (rate k); stacking the per-point
translation and rotation responses gives an approximate Jacobian, inverted
by damped least squares to turn shape error into gripper motion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DimensionError
from .mdp import Action, GripperPose, Shape, Workspace, clip_action

ANGLE_STEP_RATIO = 4.0  # rad of tilt allowed per meter of max_step
# Characteristic lever (m/rad) making rotation comparable to translation in
# the damped solve; without it the long levers let the rotation columns
# dominate the least squares and the commanded tilt winds up.
ROTATION_SCALE = 0.03


@dataclass(frozen=True)
class ServoConfig:
    k: float = 1.0
    servo_gain: float = 2.5  # 1/s
    dls_damping: float = 1e-3
    max_step: float = 0.02  # m per control tick

    def __post_init__(self):
        if self.k < 0:
            raise DimensionError("k must be >= 0")
        if self.dls_damping <= 0 or self.max_step <= 0 or self.servo_gain <= 0:
            raise DimensionError("servo_gain, dls_damping and max_step must be positive")


def _arc_lengths(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def dr_jacobian(shape: Shape, grippers: tuple, k: float) -> np.ndarray:
    """(2N x 6) map from [v_left(2), v_right(2), w_left, w_right] to point
    velocities, with influence exp(-k * arc distance to the grasped end)."""
    pts = shape.points
    n = pts.shape[0]
    left, right = grippers
    s = _arc_lengths(pts)
    total = s[-1]
    w_l = np.exp(-k * s)  # distance to the left-grasped endpoint (point 0)
    w_r = np.exp(-k * (total - s))
    jac = np.zeros((2 * n, 6))
    for i in range(n):
        r = 2 * i
        jac[r, 0] = jac[r + 1, 1] = w_l[i]
        jac[r, 2] = jac[r + 1, 3] = w_r[i]
        # Rigid-lever rotation: velocity = omega x (point - gripper).
        lev_l = pts[i] - left.position
        lev_r = pts[i] - right.position
        jac[r, 4] = -w_l[i] * lev_l[1]
        jac[r + 1, 4] = w_l[i] * lev_l[0]
        jac[r, 5] = -w_r[i] * lev_r[1]
        jac[r + 1, 5] = w_r[i] * lev_r[0]
    return jac


def servo_step(current: Shape, goal: Shape, grippers: tuple,
               config: ServoConfig = ServoConfig(), tick: float = 0.5,
               workspace: Workspace = Workspace()) -> Action:
    """One servo tick: damped-least-squares step toward the goal shape,
    returned as absolute desired poses for both arms."""
    if current.n != goal.n:
        raise DimensionError(f"point counts differ: {current.n} vs {goal.n}")
    left, right = grippers
    jac = dr_jacobian(current, grippers, config.k)
    scaled = jac.copy()
    scaled[:, 4:] *= ROTATION_SCALE
    err = (goal.points - current.points).reshape(-1)
    normal = scaled.T @ scaled + config.dls_damping * np.eye(6)
    try:
        v = np.linalg.solve(normal, scaled.T @ (config.servo_gain * err))
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError(f"servo normal matrix unsolvable: {exc}") from exc
    v[4:] *= ROTATION_SCALE
    if not np.all(np.isfinite(v)):
        raise DegenerateGeometryError("servo solution is non-finite")

    step = v * tick
    max_ang = ANGLE_STEP_RATIO * config.max_step
    for sl in (slice(0, 2), slice(2, 4)):
        norm = float(np.linalg.norm(step[sl]))
        if norm > config.max_step:
            step[sl] *= config.max_step / norm
    step[4] = float(np.clip(step[4], -max_ang, max_ang))
    step[5] = float(np.clip(step[5], -max_ang, max_ang))

    action = Action(
        left=GripperPose(left.x + step[0], left.y + step[1], left.theta + step[4]),
        right=GripperPose(right.x + step[2], right.y + step[3], right.theta + step[5]),
    )
    return clip_action(action, workspace)
