"""Experiment drivers: goal sequences, closed-loop evaluation, sweeps.

Goals are produced by rolling the simulator itself through scripted gripper
maneuvers, so every goal shape is physically attainable.  Evaluation then
closes the loop: the runner (learned policy or servoing baseline) is queried
at the policy rate while trajectories, PD tracking, and the rope advance at
the control rate, switching goals on a fixed budget without resets.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .control import ControlSession
from .errors import EvaluationError
from .mdp import (
    Action,
    GripperPose,
    Observation,
    Shape,
    Workspace,
    clip_action,
    encode_input,
    reward,
)
from .motion import MotionParams, PdGains
from .sim import RopeSimulator, SimConfig, material_preset
from .servo import ServoConfig, servo_step
from .td3bc import PolicyParams, actor_forward

log = logging.getLogger(__name__)

GOAL_BUDGET = 5.0  # s per test shape
POLICY_HZ = 2.0
STRAIGHT_DEV = 0.025  # m; max chord deviation for a "straight" tag
CURVED_DEV = 0.03  # m; min mid-chord deviation for convex/concave tags
# Curved goals respect the collection separation cap (0.95 L); straight goals
# need nearly full extension (a capped 5% of slack already bows 7+ cm).
STRAIGHT_SEP_FACTOR = 0.9975


@dataclass(frozen=True)
class GoalSequence:
    goals: tuple  # Shapes
    tags: tuple  # "straight" | "convex" | "concave"
    seed: int
    budget: float = GOAL_BUDGET

    def __len__(self):
        return len(self.goals)


@dataclass
class EvalReport:
    runner: str
    seed: int
    tags: list
    finals: list
    series: list  # per shape: list of (t, rmse) at the policy rate
    goal_points: list  # per shape: (N,2) array
    final_points: list
    policy_queries: int = 0
    aborted: bool = False

    @property
    def mean(self) -> float:
        return float(np.mean(self.finals))

    @property
    def std(self) -> float:
        return float(np.std(self.finals))

    @property
    def rmse_min(self) -> float:
        return float(np.min(self.finals))

    @property
    def rmse_max(self) -> float:
        return float(np.max(self.finals))

    def to_dict(self) -> dict:
        return {
            "runner": self.runner,
            "seed": self.seed,
            "tags": list(self.tags),
            "finals": [float(v) for v in self.finals],
            "mean": self.mean,
            "std": self.std,
            "min": self.rmse_min,
            "max": self.rmse_max,
            "policy_queries": self.policy_queries,
            "aborted": self.aborted,
        }


# -- goal generation ---------------------------------------------------------

# Tag layout: two straights, three of each curvature, with convex->concave
# transitions at 2->3 and 5->6 (the curvature inversions).
GOAL_TAGS = ("straight", "convex", "convex", "concave",
             "straight", "convex", "concave", "concave")


def _goal_script(rng: np.random.Generator, rest_length: float) -> list:
    """Per-goal maneuver lists [(left pose, right pose), ...], jittered.

    Straight goals pull the rope out to near-full extension; curved goals
    close the grippers in with the end tilts choosing the bow side.  Concave
    goals that follow a convex one straighten first so the tilts (and not a
    leftover bulge) decide the side.
    """
    j = lambda s=0.005: float(rng.uniform(-s, s))
    t = math.pi / 4
    # Margin inside the straight-goal cap absorbs the PD tracking residual.
    y_taut = 0.5 * (STRAIGHT_SEP_FACTOR * rest_length - 0.001)

    def taut(x):
        xj = x + j(0.003)  # shared so the pin pair stays exactly vertical
        return (GripperPose(xj, y_taut, 0.0), GripperPose(xj, -y_taut, 0.0))
    def bow(x, y, tilt):
        # Straighten first, then close in with tilted tips, approaching from
        # the side opposite the intended bow: the dragged middle trails
        # behind the grippers, so the approach direction and the tilts agree
        # on where the slack folds.
        xs = x + (0.06 if tilt > 0 else -0.06)
        xs = min(max(xs, 0.31), 0.52)
        return [
            taut(xs),
            (GripperPose(x + j(), y + j(), tilt + j(0.02)),
             GripperPose(x + j(), -y - j(), -tilt - j(0.02))),
        ]

    return [
        [taut(0.455)],                     # straight
        bow(0.40, 0.16, 0.75 * t),         # convex (bow toward +x)
        bow(0.47, 0.19, 0.6 * t),          # convex, shallower and shifted
        bow(0.42, 0.15, -0.75 * t),        # concave (bow toward -x)
        [taut(0.505)],                     # straight
        bow(0.40, 0.15, 0.8 * t),          # convex
        bow(0.44, 0.16, -0.7 * t),         # concave
        bow(0.37, 0.13, -0.85 * t),        # concave, deeper
    ]


def classify_curvature(shape: Shape) -> str:
    """Tag by the mid-chain transverse deviation from the endpoint chord."""
    pts = shape.points
    chord = pts[-1] - pts[0]
    norm = float(np.linalg.norm(chord))
    if norm < 1e-9:
        return "degenerate"
    u = chord / norm
    perp = np.array([-u[1], u[0]])
    dev = (pts - pts[0]) @ perp
    mid = float(dev[len(dev) // 2])
    if np.max(np.abs(dev)) <= STRAIGHT_DEV:
        return "straight"
    if mid >= CURVED_DEV:
        return "convex"
    if mid <= -CURVED_DEV:
        return "concave"
    return "ambiguous"


def make_goal_sequence(config: SimConfig, material, seed: int,
                       workspace: Workspace = Workspace(),
                       motion: MotionParams = MotionParams(nominal_speed=0.08),
                       gains: PdGains = PdGains(),
                       n_points: int | None = None) -> GoalSequence:
    """Roll the simulator through scripted maneuvers and record the shapes.

    Generation uses a brisker timing law than data collection: only the
    settled end states matter, and they stay physically attainable either way.
    """
    mat = material_preset(material)
    sim = RopeSimulator(config, mat, workspace)
    session = ControlSession(sim, sim.init_straight(0.5), motion, gains)
    rng = np.random.default_rng(seed)
    goals = []
    for tag, maneuver in zip(GOAL_TAGS, _goal_script(rng, mat.rest_length)):
        for left, right in maneuver:
            session.set_target("left", left)
            session.set_target("right", right)
            while not session.targets_reached():
                session.tick()
            session.run_for(1.0)
        shape = session.current_shape() if n_points is None else session.current_shape(n_points)
        got = classify_curvature(shape)
        if got != tag:
            raise EvaluationError(
                f"goal generation produced a {got} shape where {tag} was scripted "
                f"(seed {seed}, material {mat.bend_stiffness})"
            )
        sep = float(np.linalg.norm(shape.points[-1] - shape.points[0]))
        cap = STRAIGHT_SEP_FACTOR if tag == "straight" else 0.95
        if sep > cap * mat.rest_length + 1e-6:
            raise EvaluationError("generated goal violates the separation cap")
        goals.append(shape)
    return GoalSequence(goals=tuple(goals), tags=GOAL_TAGS, seed=seed)


# -- runners ------------------------------------------------------------------


class PolicyRunner:
    """Inference-only wrapper around trained policy parameters."""

    def __init__(self, params: PolicyParams, name: str = "policy"):
        self.params = params
        self.name = name

    def __call__(self, obs: Observation, goal: Shape) -> Action:
        vec = encode_input(goal, obs)
        return Action.from_array(np.asarray(actor_forward(self.params, vec), dtype=float))


class BaselineRunner:
    """Diminishing-rigidity servoing at the policy rate."""

    def __init__(self, config: ServoConfig = ServoConfig(), name: str = "baseline",
                 workspace: Workspace = Workspace()):
        self.config = config
        self.name = name
        self.workspace = workspace

    def __call__(self, obs: Observation, goal: Shape) -> Action:
        return servo_step(
            obs.shape, goal, (obs.left, obs.right), self.config,
            tick=1.0 / POLICY_HZ, workspace=self.workspace,
        )


class OracleRunner:
    """Teleports the grippers to the goal endpoints; sanity baseline."""

    name = "oracle"

    def __call__(self, obs: Observation, goal: Shape) -> Action:
        pts = goal.points
        tip_l = pts[1] - pts[0]
        tip_r = pts[-2] - pts[-1]
        theta_l = math.atan2(tip_l[0], -tip_l[1])
        theta_r = math.atan2(-tip_r[0], tip_r[1])
        return Action(
            left=GripperPose(pts[0][0], pts[0][1], theta_l),
            right=GripperPose(pts[-1][0], pts[-1][1], theta_r),
        )


# -- closed-loop evaluation ----------------------------------------------------


def run_eval(runner, sequence: GoalSequence, config: SimConfig, material,
             workspace: Workspace = Workspace(),
             motion: MotionParams = MotionParams(),
             gains: PdGains = PdGains(),
             seed: int = 0,
             shuffle_goals: bool = False) -> EvalReport:
    """Drive the 8-goal test without resets and record per-shape RMSE."""
    mat = material_preset(material)
    sim = RopeSimulator(config, mat, workspace)
    session = ControlSession(sim, sim.init_straight(0.5), motion, gains)
    ticks_per_query = int(round(config.step_rate / POLICY_HZ))
    queries_per_goal = int(round(sequence.budget * POLICY_HZ))

    order = list(range(len(sequence)))
    if shuffle_goals:
        np.random.default_rng(seed).shuffle(order)

    name = getattr(runner, "name", runner.__class__.__name__)
    report = EvalReport(
        runner=name, seed=seed,
        tags=[sequence.tags[i] for i in order],
        finals=[], series=[], goal_points=[], final_points=[],
    )
    for goal_idx in order:
        goal = sequence.goals[goal_idx]
        t0 = session.time
        series = []
        try:
            for _ in range(queries_per_goal):
                action = runner(session.observation(goal.n), goal)
                arr = action.as_array()
                if not np.all(np.isfinite(arr)):
                    raise EvaluationError("runner produced a non-finite action")
                session.set_action(clip_action(action, workspace))
                report.policy_queries += 1
                for _ in range(ticks_per_query):
                    session.tick()
                series.append(
                    (session.time - t0, -reward(goal, session.current_shape(goal.n)))
                )
        except EvaluationError as err:
            log.warning("evaluation aborted on shape %d: %s", goal_idx, err)
            report.aborted = True
            break
        report.series.append(series)
        report.finals.append(series[-1][1])
        report.goal_points.append(goal.points.copy())
        report.final_points.append(session.current_shape(goal.n).points.copy())
    return report


# -- sweeps --------------------------------------------------------------------


def sweep_augmentation(base_dataset, ratios, alpha: float,
                       train_config, sequence: GoalSequence,
                       sim_config: SimConfig, material,
                       relabel_mode: str = "intra",
                       relabel_seed: int = 0,
                       workspace: Workspace = Workspace()) -> dict:
    """Train one policy per augmentation ratio and evaluate on one sequence."""
    from dataclasses import replace as dc_replace

    from .data import relabel
    from .td3bc import train

    reports = {}
    for ratio in ratios:
        augmented = relabel(base_dataset, relabel_mode, ratio, relabel_seed)
        cfg = dc_replace(train_config, alpha=alpha)
        log.info("sweep: ratio %dx -> %d episodes, training %d steps",
                 ratio, len(augmented), cfg.total_steps)
        params = train(augmented, cfg, workspace)
        runner = PolicyRunner(params, name=f"policy_{ratio}x")
        reports[ratio] = run_eval(
            runner, sequence, sim_config, material,
            workspace=workspace, seed=train_config.seed,
        )
    return reports


def sweep_alpha(dataset, alphas, train_config, sequence: GoalSequence,
                sim_config: SimConfig, material,
                workspace: Workspace = Workspace()) -> dict:
    """Train one policy per BC-regularization strength on a fixed dataset."""
    from dataclasses import replace as dc_replace

    from .td3bc import train

    reports = {}
    for alpha in alphas:
        cfg = dc_replace(train_config, alpha=alpha)
        log.info("sweep: alpha %.2f, training %d steps", alpha, cfg.total_steps)
        params = train(dataset, cfg, workspace)
        runner = PolicyRunner(params, name=f"policy_a{alpha:g}")
        reports[alpha] = run_eval(
            runner, sequence, sim_config, material,
            workspace=workspace, seed=train_config.seed,
        )
    return reports


# -- artifacts -----------------------------------------------------------------


def _svg_polyline(points: np.ndarray, color: str, dash: str = "") -> str:
    coords = " ".join(f"{x:.4f},{y:.4f}" for x, y in points)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline points="{coords}" fill="none" stroke="{color}" '
        f'stroke-width="0.006"{dash_attr} stroke-linecap="round"/>'
    )


def _overlay_svg(goal: np.ndarray, final: np.ndarray, title: str) -> str:
    both = np.vstack([goal, final])
    lo = both.min(axis=0) - 0.05
    hi = both.max(axis=0) + 0.05
    w, h = hi - lo
    # Flip y so +y points up in the drawing.
    flip = lambda pts: np.column_stack([pts[:, 0], hi[1] + lo[1] - pts[:, 1]])
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0]:.3f} {lo[1]:.3f} '
        f'{w:.3f} {h:.3f}" width="480" height="{480 * h / w:.0f}">',
        f"<title>{title}</title>",
        _svg_polyline(flip(goal), "#c62828", dash="0.012,0.008"),
        _svg_polyline(flip(final), "#1565c0"),
        "</svg>",
    ])


def emit_artifacts(reports: list, out_dir: str) -> list:
    """Write metrics.csv, summary.csv and per-shape overlay SVGs.

    reports: list of (labels dict, EvalReport); labels may carry ratio/alpha.
    Returns the list of file paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["runner", "ratio", "alpha", "shape_idx", "tag", "rmse_final"])
        for labels, report in reports:
            for idx, (tag, rmse) in enumerate(zip(report.tags, report.finals)):
                writer.writerow([
                    report.runner, labels.get("ratio", ""), labels.get("alpha", ""),
                    idx, tag, repr(rmse),
                ])
    written.append(metrics_path)

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["runner", "ratio", "alpha", "mean", "std", "min", "max"])
        for labels, report in reports:
            if not report.finals:
                continue
            writer.writerow([
                report.runner, labels.get("ratio", ""), labels.get("alpha", ""),
                repr(report.mean), repr(report.std),
                repr(report.rmse_min), repr(report.rmse_max),
            ])
    written.append(summary_path)

    for labels, report in reports:
        for idx, (goal, final) in enumerate(zip(report.goal_points, report.final_points)):
            name = f"overlay_{report.runner}_{idx:02d}.svg"
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(_overlay_svg(goal, final, f"{report.runner} shape {idx}"))
            written.append(path)
    return written
