import numpy as np
import pytest

from dloshape.control import ControlSession
from dloshape.mdp import Action, GripperPose
from dloshape.sim import SOFT, RopeSimulator, SimConfig


@pytest.fixture()
def session():
    sim = RopeSimulator(SimConfig(), SOFT)
    return ControlSession(sim, sim.init_straight(0.5))


class TestControlSession:
    def test_idle_session_holds_pose(self, session):
        start = session.state.node_positions.copy()
        session.run_for(0.5)
        assert np.abs(session.state.node_positions - start).max() < 1e-9

    def test_targets_reached_flow(self, session):
        assert session.targets_reached()  # nothing commanded yet
        session.set_target("left", GripperPose(0.45, 0.22, 0.1))
        assert not session.targets_reached()
        session.run_for(session._traj["left"].duration + 0.1)
        assert session.targets_reached()

    def test_current_targets_reports_commanded_poses(self, session):
        target = GripperPose(0.46, 0.21, 0.2)
        session.set_target("left", target)
        act = session.current_targets()
        assert act.left == target
        assert act.right == session.state.gripper_right

    def test_set_action_replans_both_arms(self, session):
        action = Action(left=GripperPose(0.45, 0.2, 0.1),
                        right=GripperPose(0.52, -0.21, -0.1))
        session.set_action(action)
        session.run_for(4.0)
        assert np.linalg.norm(
            session.state.gripper_left.position - action.left.position) < 2e-3
        assert np.linalg.norm(
            session.state.gripper_right.position - action.right.position) < 2e-3

    def test_observation_couples_shape_to_grippers(self, session):
        obs = session.observation()
        assert obs.shape.n == 18
        assert np.allclose(obs.shape.points[0], obs.left.position, atol=1e-9)
        assert np.allclose(obs.shape.points[-1], obs.right.position, atol=1e-9)

    def test_preempting_keeps_setpoint_continuous(self, session):
        session.set_target("left", GripperPose(0.42, 0.25, 0.3))
        session.run_for(0.8)
        pose_before, vel_before = session.arm_setpoint("left")
        session.set_target("left", GripperPose(0.55, 0.15, -0.2))
        pose_after, vel_after = session.arm_setpoint("left")
        assert np.allclose(pose_before.as_array(), pose_after.as_array(), atol=1e-9)
        assert np.allclose(vel_before, vel_after, atol=1e-9)

    def test_time_advances_with_ticks(self, session):
        t0 = session.time
        for _ in range(25):
            session.tick()
        assert session.time - t0 == pytest.approx(0.5, abs=1e-9)
