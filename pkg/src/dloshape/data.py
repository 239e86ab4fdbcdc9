"""Randomized data collection and hindsight goal relabeling.

Collection runs the simulator through sampled point-to-point motions without
ever resetting the rope: each episode starts from the previous one's final
state, ends when its motion completes, and stores the final resampled shape
as the episode goal.  Relabeling multiplies a dataset by substituting new
goals into copies of the collected episodes and recomputing rewards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .control import ControlSession
from .errors import ConfigurationError, ModeInfeasibleError, SimulationDivergedError
from .mdp import Action, GripperPose, Observation, Shape, Workspace, SHAPE_POINTS, reward
from .motion import MotionParams, PdGains
from .sim import MaterialParams, RopeSimulator, SimConfig, material_preset

log = logging.getLogger(__name__)

RECORD_HZ = 20.0
STORAGE_HZ = 10.0
RELABEL_MODES = ("intra", "inter", "mixed")

# Command-category mix: left / right / both arms, then the scripted
# curvature-inversion sequence with the leftover probability.
P_LEFT = 0.3
P_RIGHT = 0.3
P_BOTH = 0.3
MAX_SEPARATION_FACTOR = 0.95
MAX_CHAIN_SOURCES = 3  # episodes stitched per inter/mixed synthetic episode
SETTLE_TIME = 1.0  # s of hold after each motion so the rope comes to rest


@dataclass(frozen=True)
class MotionCommand:
    """One episode's motion: a category tag plus per-arm target waypoints."""

    category: str  # left | right | both | invert
    waypoints: tuple  # ((left GripperPose | None, right GripperPose | None), ...)


@dataclass(frozen=True)
class Step:
    observation: Observation
    action: Action
    reward: float
    time: float


@dataclass(frozen=True)
class Episode:
    steps: tuple
    goal: Shape
    material_tag: str
    seed: int

    @property
    def duration(self) -> float:
        return self.steps[-1].time - self.steps[0].time

    def __len__(self):
        return len(self.steps)


@dataclass
class Dataset:
    episodes: list
    manifest: dict

    def __len__(self):
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    @property
    def transition_count(self) -> int:
        return sum(max(len(ep) - 1, 0) for ep in self.episodes)


def _separation_ok(left: GripperPose, right: GripperPose, rest_length: float) -> bool:
    return (
        math.hypot(left.x - right.x, left.y - right.y)
        <= MAX_SEPARATION_FACTOR * rest_length
    )


def sample_command(rng: np.random.Generator, workspace: Workspace,
                   current: tuple, material: MaterialParams) -> MotionCommand:
    """Draw the next episode's motion.

    With probability 0.3 each, one uniform in-bounds target for the left,
    right or both grippers; with the remaining 0.1, a scripted (seed
    perturbed) sequence that inverts the rope's curvature.  Targets whose
    gripper separation would exceed 0.95x the rope length are resampled.
    """
    cur_left, cur_right = current
    rest = material.rest_length
    u = rng.random()
    if u < P_LEFT + P_RIGHT + P_BOTH:
        if u < P_LEFT:
            category = "left"
        elif u < P_LEFT + P_RIGHT:
            category = "right"
        else:
            category = "both"
        while True:
            left = workspace.sample_pose("left", rng) if category in ("left", "both") else cur_left
            right = workspace.sample_pose("right", rng) if category in ("right", "both") else cur_right
            if _separation_ok(left, right, rest):
                break
        wp_left = left if category in ("left", "both") else None
        wp_right = right if category in ("right", "both") else None
        return MotionCommand(category, ((wp_left, wp_right),))
    return MotionCommand("invert", _inversion_waypoints(rng, workspace, rest))


def _inversion_waypoints(rng: np.random.Generator, workspace: Workspace,
                         rest_length: float) -> tuple:
    """Scripted bow-one-way / straighten / bow-the-other-way sequence.

    Seed-perturbed around fixed anchor poses; every waypoint respects the
    separation cap by construction.
    """
    (x_lo, x_hi) = workspace.x_range
    t_hi = workspace.theta_range[1]
    side = 1.0 if rng.random() < 0.5 else -1.0
    jit = lambda s: float(rng.uniform(-s, s))

    x_in = x_lo + 0.05 + jit(0.02)
    y_in = 0.13 + jit(0.02)
    tilt = side * t_hi * (0.85 + jit(0.1))
    bow_first = (
        GripperPose(x_in, y_in, tilt),
        GripperPose(x_in + jit(0.02), -y_in, -tilt),
    )
    x_out = 0.5 * (x_lo + x_hi) + jit(0.03)
    y_out = 0.24 + jit(0.015)
    opened = (
        GripperPose(x_out, y_out, 0.0 + jit(0.05)),
        GripperPose(x_out + jit(0.02), -y_out, 0.0 + jit(0.05)),
    )
    x_in2 = x_lo + 0.07 + jit(0.02)
    y_in2 = 0.14 + jit(0.02)
    bow_other = (
        GripperPose(x_in2, y_in2, -tilt),
        GripperPose(x_in2 + jit(0.02), -y_in2, tilt),
    )
    waypoints = (bow_first, opened, bow_other)
    for left, right in waypoints:
        if not _separation_ok(left, right, rest_length):
            raise ConfigurationError("inversion waypoint violates the separation cap")
    return waypoints


def _run_episode(session: ControlSession, command: MotionCommand,
                 goal_points: int) -> list:
    """Drive one motion command to completion, recording at RECORD_HZ."""
    step_rate = session.sim.config.step_rate
    records = []
    tick_index = 0
    record_index = 0

    def maybe_record():
        nonlocal record_index
        due = int(round(record_index * step_rate / RECORD_HZ))
        if tick_index == due:
            records.append(
                (
                    tick_index / step_rate,
                    session.observation(goal_points),
                    session.current_targets(),
                )
            )
            record_index += 1

    maybe_record()
    for wp_left, wp_right in command.waypoints:
        if wp_left is not None:
            session.set_target("left", wp_left)
        if wp_right is not None:
            session.set_target("right", wp_right)
        while not session.targets_reached():
            session.tick()
            tick_index += 1
            maybe_record()
    for _ in range(int(round(SETTLE_TIME * step_rate))):
        session.tick()
        tick_index += 1
        maybe_record()
    return records


def collect(config: SimConfig, material, n_episodes: int, seed: int,
            workspace: Workspace = Workspace(),
            motion: MotionParams = MotionParams(),
            gains: PdGains = PdGains(),
            goal_points: int = SHAPE_POINTS,
            init_x: float = 0.5) -> Dataset:
    """Collect episodes continuously (no reset between episodes)."""
    if n_episodes < 1:
        raise ConfigurationError("n_episodes must be >= 1")
    mat = material_preset(material)
    material_tag = "soft" if mat == material_preset("soft") else (
        "elastic" if mat == material_preset("elastic") else "custom")
    sim = RopeSimulator(config, mat, workspace)
    state = sim.init_straight(init_x)
    rng = np.random.default_rng(seed)
    episodes = []
    discarded = []
    while len(episodes) < n_episodes:
        ep_seed = int(rng.integers(0, 2**31 - 1))
        ep_rng = np.random.default_rng(ep_seed)
        command = sample_command(
            ep_rng, workspace, (state.gripper_left, state.gripper_right), mat
        )
        session = ControlSession(sim, state.copy(), motion, gains)
        try:
            records = _run_episode(session, command, goal_points)
        except SimulationDivergedError as err:
            log.warning("episode seed %d diverged (%s); rope re-initialized", ep_seed, err)
            discarded.append(ep_seed)
            state = sim.init_straight(init_x)
            continue
        state = session.state
        episodes.append(_make_episode(records, material_tag, ep_seed))
    manifest = {
        "version": 1,
        "material": material_tag,
        "seeds": {"collection": seed, "episodes": [ep.seed for ep in episodes],
                  "discarded": discarded},
        "rates": {"record_hz": RECORD_HZ, "storage_hz": STORAGE_HZ},
        "workspace": {
            "x_range": list(workspace.x_range),
            "y_left": list(workspace.y_left),
            "y_right": list(workspace.y_right),
            "theta_range": list(workspace.theta_range),
        },
        "augmentation": None,
        "episode_count": len(episodes),
    }
    return Dataset(episodes=episodes, manifest=manifest)


def _make_episode(records: list, material_tag: str, ep_seed: int) -> Episode:
    # Keep every 2nd record of the RECORD_HZ stream, starting at index 0.
    kept = records[:: int(round(RECORD_HZ / STORAGE_HZ))]
    goal = Shape(kept[-1][1].shape.points.copy())
    t0 = kept[0][0]
    steps = tuple(
        Step(observation=obs, action=act, reward=reward(goal, obs.shape), time=t - t0)
        for (t, obs, act) in kept
    )
    return Episode(steps=steps, goal=goal, material_tag=material_tag, seed=ep_seed)


def _retime(steps: list) -> tuple:
    return tuple(
        replace(s, time=i / STORAGE_HZ) for i, s in enumerate(steps)
    )


def _relabeled(steps: list, goal: Shape) -> tuple:
    return tuple(
        replace(s, reward=reward(goal, s.observation.shape)) for s in steps
    )


def relabel(dataset: Dataset, mode: str, ratio: int, seed: int) -> Dataset:
    """Goal substitution: output has ratio x the input episode count.

    intra picks a later shape within the same episode and truncates there;
    inter adopts the stored goal of a following episode, stitching the
    episodes in between (valid because collection never resets); mixed
    stitches like inter but stops at an intermediate shape of the future
    episode.  Observations and actions are reused as-is; only goals, rewards,
    and times change.
    """
    if mode not in RELABEL_MODES:
        raise ConfigurationError(f"unknown relabel mode {mode!r}")
    if ratio < 1:
        raise ConfigurationError("ratio must be >= 1")
    if not dataset.episodes:
        raise ConfigurationError("dataset is empty")
    if ratio == 1:
        return dataset
    n = len(dataset.episodes)
    if mode in ("inter", "mixed") and n < 2:
        raise ModeInfeasibleError(f"{mode} relabeling needs at least 2 episodes")

    rng = np.random.default_rng(seed)
    synthetic = []
    for _ in range(ratio - 1):
        for i, ep in enumerate(dataset.episodes):
            if mode == "intra":
                synthetic.append(_intra(ep, rng))
            else:
                synthetic.append(_chained(dataset.episodes, i, rng, mode))
    manifest = dict(dataset.manifest)
    manifest["augmentation"] = {"mode": mode, "ratio": ratio, "seed": seed}
    manifest["episode_count"] = n * ratio
    return Dataset(episodes=list(dataset.episodes) + synthetic, manifest=manifest)


def _intra(ep: Episode, rng: np.random.Generator) -> Episode:
    j = int(rng.integers(1, len(ep.steps)))
    goal = Shape(ep.steps[j].observation.shape.points.copy())
    steps = _relabeled(ep.steps[: j + 1], goal)
    return Episode(steps=steps, goal=goal, material_tag=ep.material_tag, seed=ep.seed)


def _chained(episodes: list, i: int, rng: np.random.Generator, mode: str) -> Episode:
    n = len(episodes)
    if i >= n - 1:  # no future episode to chain into: redraw the source
        i = int(rng.integers(0, n - 1))
    hi = min(n - 1, i + MAX_CHAIN_SOURCES - 1)
    k = int(rng.integers(i + 1, hi + 1))
    chain = []
    for ep in episodes[i:k]:
        chain.extend(ep.steps)
    last = episodes[k]
    if mode == "inter":
        chain.extend(last.steps)
        goal = Shape(last.goal.points.copy())
    else:  # mixed: stop at an intermediate shape of the future episode
        j = int(rng.integers(1, len(last.steps)))
        chain.extend(last.steps[: j + 1])
        goal = Shape(last.steps[j].observation.shape.points.copy())
    steps = _relabeled(_retime(chain), goal)
    return Episode(
        steps=steps, goal=goal,
        material_tag=episodes[i].material_tag, seed=episodes[i].seed,
    )


def split(dataset: Dataset, n_test: int) -> tuple:
    """Last n_test episodes (collection order) become the held-out test set."""
    if n_test >= len(dataset.episodes):
        raise ConfigurationError("n_test must be smaller than the episode count")
    if n_test == 0:
        train_eps, test_eps = list(dataset.episodes), []
    else:
        train_eps = list(dataset.episodes[:-n_test])
        test_eps = list(dataset.episodes[-n_test:])
    train_manifest = dict(dataset.manifest)
    train_manifest["episode_count"] = len(train_eps)
    test_manifest = dict(dataset.manifest)
    test_manifest["episode_count"] = len(test_eps)
    return (
        Dataset(episodes=train_eps, manifest=train_manifest),
        Dataset(episodes=test_eps, manifest=test_manifest),
    )


def to_transitions(dataset: Dataset) -> dict:
    """Flatten episodes into parallel arrays for training.

    Rewards follow the landed state: transition t carries step t+1's reward,
    and done marks episode ends.
    """
    from .mdp import encode_input

    s, a, r, s2, done = [], [], [], [], []
    for ep in dataset.episodes:
        for t in range(len(ep.steps) - 1):
            cur, nxt = ep.steps[t], ep.steps[t + 1]
            s.append(encode_input(ep.goal, cur.observation))
            a.append(cur.action.as_array())
            r.append(nxt.reward)
            s2.append(encode_input(ep.goal, nxt.observation))
            done.append(t + 1 == len(ep.steps) - 1)
    if not s:
        raise ConfigurationError("dataset has no transitions")
    return {
        "state": np.asarray(s),
        "action": np.asarray(a),
        "reward": np.asarray(r),
        "next_state": np.asarray(s2),
        "done": np.asarray(done, dtype=float),
    }
