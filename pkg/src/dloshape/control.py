"""Closed-loop session: trajectories + PD tracking driving the simulator.

One session owns a simulator and a live state.  Callers push absolute target
poses for either arm at any time (restart semantics: replanning starts from
the live sampled pose and velocity) and tick the loop at the control rate.
"""
from __future__ import annotations

import numpy as np

from .mdp import Action, GripperPose, Observation, Shape, Workspace, SHAPE_POINTS
from .motion import MotionParams, PdGains, integrate_command, pd_track, plan, sample
from .sim import ArmCommand, RopeSimulator, SimState, resample_shape


class ControlSession:
    def __init__(self, sim: RopeSimulator, state: SimState,
                 motion: MotionParams = MotionParams(),
                 gains: PdGains = PdGains()):
        self.sim = sim
        self.state = state
        self.motion = motion
        self.gains = gains
        self.workspace: Workspace = sim.workspace
        # Commanded poses are integrated separately from the simulator state so
        # the PD loop closes on what was actually commanded, tick by tick.
        self._cmd_pose = {"left": state.gripper_left, "right": state.gripper_right}
        self._traj = {"left": None, "right": None}

    @property
    def time(self) -> float:
        return self.state.sim_time

    def arm_setpoint(self, side: str):
        """Live sampled (pose, velocity) for one arm; used for replans."""
        traj = self._traj[side]
        if traj is None:
            return self._cmd_pose[side], np.zeros(3)
        return sample(traj, self.time)

    def set_target(self, side: str, target: GripperPose):
        """Replace the arm's trajectory, starting from its live setpoint."""
        current = self.arm_setpoint(side)
        self._traj[side] = plan(
            current, target, self.time, self.motion,
            bounds=self.workspace.arm_bounds(side),
        )

    def set_action(self, action: Action):
        self.set_target("left", action.left)
        self.set_target("right", action.right)

    def targets_reached(self, slack: float = 0.0) -> bool:
        """True once both trajectories have run past their end times."""
        return all(
            traj is None or self.time >= traj.end_time + slack
            for traj in self._traj.values()
        )

    def tick(self) -> SimState:
        """One 1/step_rate control period: sample, track, step the rope."""
        dt = self.sim.config.dt
        cmds = {}
        for side in ("left", "right"):
            desired = self.arm_setpoint(side)
            velocity = pd_track(desired, self._cmd_pose[side], self.gains)
            pose = integrate_command(self._cmd_pose[side], velocity, dt)
            self._cmd_pose[side] = pose
            cmds[side] = ArmCommand(pose=pose, velocity=velocity)
        self.state = self.sim.step(self.state, cmds["left"], cmds["right"])
        return self.state

    def run_for(self, seconds: float) -> SimState:
        n = int(round(seconds * self.sim.config.step_rate))
        for _ in range(n):
            self.tick()
        return self.state

    def observation(self, n_points: int = SHAPE_POINTS) -> Observation:
        shape = resample_shape(self.state, n_points)
        return Observation(
            shape=shape,
            left=self.state.gripper_left,
            right=self.state.gripper_right,
        )

    def current_shape(self, n_points: int = SHAPE_POINTS) -> Shape:
        return resample_shape(self.state, n_points)

    def current_targets(self) -> Action:
        """Absolute desired poses both arms are currently driving toward."""
        left = self._traj["left"].end_pose if self._traj["left"] else self._cmd_pose["left"]
        right = self._traj["right"].end_pose if self._traj["right"] else self._cmd_pose["right"]
        return Action(left=left, right=right)
