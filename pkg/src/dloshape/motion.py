"""Point-to-point trajectories and PD velocity tracking for the grippers.

Targets arrive sparsely (from a policy or a sampler); each becomes a cubic
trajectory whose duration scales with travel distance.  A PD law turns the
sampled (pose, velocity) into a commanded velocity at the control rate.  If a
new target preempts a running trajectory, the replacement starts from the
live pose and velocity, so the commanded motion stays velocity-continuous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RejectedCommandError
from .mdp import GripperPose, wrap_angle


@dataclass(frozen=True)
class MotionParams:
    """Timing law: duration = clamp(distance / nominal_speed, d_min, d_max)."""

    nominal_speed: float = 0.035  # m/s, sized to the slow dual-arm platform
    d_min: float = 1.0  # s
    d_max: float = 10.0  # s


@dataclass(frozen=True)
class PdGains:
    kp: float = 5.0  # 1/s
    kd: float = 1.0  # feedforward weight
    max_speed: float = 0.5  # m/s
    max_angular_speed: float = 2.0  # rad/s

    def __post_init__(self):
        if self.kp <= 0 or self.kd < 0 or self.max_speed <= 0 or self.max_angular_speed <= 0:
            raise ValueError("PD gains out of range")


@dataclass(frozen=True)
class CubicTrajectory:
    """Per-axis cubic from (start pose, start velocity) to rest at end pose.

    coeffs rows are [a0, a1, a2, a3] for x, y and the unwrapped angle.
    """

    start_pose: GripperPose
    start_velocity: np.ndarray  # (3,): vx, vy, omega
    end_pose: GripperPose
    duration: float
    start_time: float
    coeffs: np.ndarray  # (3, 4)

    def sample(self, t: float) -> tuple[GripperPose, np.ndarray]:
        return sample(self, t)

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


def _cubic_coeffs(p0: float, v0: float, p1: float, duration: float) -> np.ndarray:
    """Cubic with p(0)=p0, p'(0)=v0, p(T)=p1, p'(T)=0."""
    T = duration
    d = p1 - p0
    a2 = 3.0 * d / T**2 - 2.0 * v0 / T
    a3 = -2.0 * d / T**3 + v0 / T**2
    return np.array([p0, v0, a2, a3])


def plan(current: tuple[GripperPose, np.ndarray], target: GripperPose, now: float,
         params: MotionParams = MotionParams(),
         bounds: tuple | None = None) -> CubicTrajectory:
    """Build a trajectory from the live (pose, velocity) to rest at target.

    bounds, when given, is ((xmin, xmax), (ymin, ymax), (tmin, tmax)); targets
    outside it are rejected.
    """
    pose, velocity = current
    velocity = np.asarray(velocity, dtype=float)
    if bounds is not None:
        for val, (lo, hi) in zip((target.x, target.y, target.theta), bounds):
            if not lo <= val <= hi:
                raise RejectedCommandError(f"target {target} outside bounds {bounds}")
    distance = math.hypot(target.x - pose.x, target.y - pose.y)
    duration = min(max(distance / params.nominal_speed, params.d_min), params.d_max)
    dtheta = wrap_angle(target.theta - pose.theta)
    coeffs = np.stack([
        _cubic_coeffs(pose.x, velocity[0], target.x, duration),
        _cubic_coeffs(pose.y, velocity[1], target.y, duration),
        _cubic_coeffs(0.0, velocity[2], dtheta, duration),  # relative angle
    ])
    return CubicTrajectory(
        start_pose=pose,
        start_velocity=velocity.copy(),
        end_pose=target,
        duration=duration,
        start_time=now,
        coeffs=coeffs,
    )


def sample(traj: CubicTrajectory, t: float) -> tuple[GripperPose, np.ndarray]:
    """Pose and velocity at absolute time t; clamps to the endpoint at rest."""
    tau = t - traj.start_time
    if tau < 0:
        raise ValueError(f"sample time {t} precedes trajectory start {traj.start_time}")
    if tau >= traj.duration:
        return traj.end_pose, np.zeros(3)
    powers = np.array([1.0, tau, tau * tau, tau**3])
    dpowers = np.array([0.0, 1.0, 2.0 * tau, 3.0 * tau * tau])
    vals = traj.coeffs @ powers
    vels = traj.coeffs @ dpowers
    pose = GripperPose(
        float(vals[0]), float(vals[1]),
        wrap_angle(traj.start_pose.theta + float(vals[2])),
    )
    return pose, vels


def pd_track(desired: tuple[GripperPose, np.ndarray], actual: GripperPose,
             gains: PdGains = PdGains()) -> np.ndarray:
    """Commanded velocity (vx, vy, omega) toward the sampled setpoint."""
    des_pose, des_vel = desired
    des_vel = np.asarray(des_vel, dtype=float)
    err = np.array([
        des_pose.x - actual.x,
        des_pose.y - actual.y,
        wrap_angle(des_pose.theta - actual.theta),
    ])
    cmd = gains.kd * des_vel + gains.kp * err
    lin = math.hypot(cmd[0], cmd[1])
    if lin > gains.max_speed:
        cmd[0] *= gains.max_speed / lin
        cmd[1] *= gains.max_speed / lin
    cmd[2] = float(np.clip(cmd[2], -gains.max_angular_speed, gains.max_angular_speed))
    return cmd


def integrate_command(pose: GripperPose, velocity: np.ndarray, dt: float) -> GripperPose:
    """Next commanded pose from a velocity command over one control tick."""
    return GripperPose(
        pose.x + float(velocity[0]) * dt,
        pose.y + float(velocity[1]) * dt,
        wrap_angle(pose.theta + float(velocity[2]) * dt),
    )
