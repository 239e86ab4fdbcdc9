"""Deterministic planar rope simulator with pinned, oriented grippers.

The rope is a chain of M particles on a horizontal table, advanced by
position-based dynamics: per substep the free particles are predicted from
their (damped) velocities and then iteratively projected onto

  * stretch constraints -- adjacent particles keep their rest spacing, with
    optional compliance,
  * bending constraints -- interior particles are pulled toward the midpoint
    of their neighbours, with a per-preset strength,
  * end-orientation constraints -- the first interior particle on each side
    is placed one rest segment from the pinned endpoint along the gripper's
    tilt direction,

followed by a table-friction pass: particles that moved slower than the
static threshold are snapped back to where the substep started, faster ones
keep (1 - kinetic_damping) of their velocity.  Both endpoints are kinematic
pins that track the commanded gripper poses exactly.

Gravity acts normal to the table and is balanced by it, so it never appears.
All arithmetic is float64 numpy with a fixed operation order, which makes
trajectories bitwise reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, RejectedCommandError, SimulationDivergedError
from .mdp import GripperPose, Shape, Workspace, reward, wrap_angle

DIVERGENCE_BOUND = 10.0  # m; any coordinate beyond this aborts the run
PIN_MARGIN = 0.10  # workspace inflation for commanded gripper poses
STRETCH_FINISH_ITERATIONS = 4  # stretch-only sweeps closing every substep
STRETCH_FINISH_EXTRA = 12  # additional sweeps allowed while violations persist
STRETCH_FINISH_TOL = 0.0035  # acceptable residual violation, fraction of a segment
BUCKLE_SEED = 0.3  # transverse fraction of compression corrections
BUCKLE_STRAIN = 0.005  # compression level that triggers the transverse kick
TIP_TENSION_SLACK = 1.02  # tip placement yields when the next segment would stretch past this


@dataclass(frozen=True)
class MaterialParams:
    """Bulk rope properties; two presets cover a soft rope and an elastic cord."""

    node_count: int = 30
    rest_length: float = 0.55
    diameter: float = 0.01
    bend_stiffness: float = 0.02
    stretch_compliance: float = 0.0
    static_friction_threshold: float = 0.01  # m/s
    kinetic_damping: float = 0.02
    node_mass: float = 0.01  # kg

    def __post_init__(self):
        if self.node_count < 2:
            raise ConfigurationError("node_count must be at least 2")
        if self.rest_length <= 0:
            raise ConfigurationError("rest_length must be positive")
        if self.diameter <= 0:
            raise ConfigurationError("diameter must be positive")
        if not 0.0 <= self.bend_stiffness <= 1.0:
            raise ConfigurationError("bend_stiffness must lie in [0, 1]")
        if self.stretch_compliance < 0.0:
            raise ConfigurationError("stretch_compliance must be >= 0")
        if self.static_friction_threshold < 0.0:
            raise ConfigurationError("static_friction_threshold must be >= 0")
        if not 0.0 <= self.kinetic_damping <= 1.0:
            raise ConfigurationError("kinetic_damping must lie in [0, 1]")
        if self.node_mass <= 0.0:
            raise ConfigurationError("node_mass must be positive")

    @property
    def segment_length(self) -> float:
        return self.rest_length / (self.node_count - 1)


#: Soft cotton-like rope: barely springs back, holds whatever bend it is given.
SOFT = MaterialParams(bend_stiffness=0.02, static_friction_threshold=0.01)
#: Elastic cord in a sleeve: springs back between the grips, slides easily.
ELASTIC = MaterialParams(bend_stiffness=0.6, static_friction_threshold=0.001)

PRESETS = {"soft": SOFT, "elastic": ELASTIC}


def material_preset(name) -> MaterialParams:
    if isinstance(name, MaterialParams):
        return name
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown material preset {name!r}") from None


@dataclass(frozen=True)
class SimConfig:
    """Stepper resolution.  constraint_iterations is the total projection
    budget per control step, split evenly across the substeps."""

    step_rate: float = 50.0  # Hz
    substeps_per_step: int = 4
    constraint_iterations: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        if self.step_rate <= 0:
            raise ConfigurationError("step_rate must be positive")
        if self.substeps_per_step < 1:
            raise ConfigurationError("substeps_per_step must be >= 1")
        if self.constraint_iterations < 1:
            raise ConfigurationError("constraint_iterations must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.step_rate

    @property
    def iterations_per_substep(self) -> int:
        return max(1, round(self.constraint_iterations / self.substeps_per_step))


@dataclass
class SimState:
    """Full rope state; an independent value safe to hand between threads."""

    node_positions: np.ndarray  # (M, 2)
    node_velocities: np.ndarray  # (M, 2)
    gripper_left: GripperPose
    gripper_right: GripperPose
    sim_time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(
            self.node_positions.copy(),
            self.node_velocities.copy(),
            self.gripper_left,
            self.gripper_right,
            self.sim_time,
        )


@dataclass(frozen=True)
class ArmCommand:
    """Target pose (and nominal velocity) for one gripper over a step."""

    pose: GripperPose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _tip_direction(theta: float, sign: float) -> np.ndarray:
    """Unit vector from a pinned endpoint toward the rope interior.

    sign=-1 for the left gripper (rope runs toward -y at zero tilt), +1 for
    the right one.  Equal left/right angles rotate both end tangents the same
    way; opposite angles bow the rope sideways.
    """
    return np.array([-sign * math.sin(theta), sign * math.cos(theta)])


class RopeSimulator:
    """Stepper bound to one (config, material) pair; states are explicit."""

    def __init__(self, config: SimConfig = SimConfig(),
                 material=SOFT, workspace: Workspace = Workspace()):
        self.config = config
        self.material = material_preset(material)
        self.workspace = workspace

    # -- construction -----------------------------------------------------

    def init_straight(self, x_line: float = 0.5) -> SimState:
        """Rope stretched vertically on the given x line, grippers at the tips."""
        xr = self.workspace.x_range
        if not xr[0] <= x_line <= xr[1]:
            raise ConfigurationError(f"x_line {x_line} outside workspace x bounds {xr}")
        m = self.material.node_count
        half = self.material.rest_length / 2.0
        ys = np.linspace(half, -half, m)
        pos = np.column_stack([np.full(m, float(x_line)), ys])
        return SimState(
            node_positions=pos,
            node_velocities=np.zeros((m, 2)),
            gripper_left=GripperPose(float(x_line), half, 0.0),
            gripper_right=GripperPose(float(x_line), -half, 0.0),
            sim_time=0.0,
        )

    # -- stepping ----------------------------------------------------------

    def step(self, state: SimState, left: ArmCommand, right: ArmCommand,
             dt: float | None = None) -> SimState:
        """Advance one control tick; returns a new state."""
        cfg, mat = self.config, self.material
        if dt is None:
            dt = cfg.dt
        if abs(dt - cfg.dt) > 1e-9:
            raise ConfigurationError(f"dt must equal 1/step_rate = {cfg.dt}")
        if mat.node_count < 4:
            raise ConfigurationError("stepping requires at least 4 nodes")
        for cmd, side in ((left, "left"), (right, "right")):
            if not self.workspace.contains(cmd.pose, side, margin=PIN_MARGIN):
                raise RejectedCommandError(
                    f"{side} gripper command {cmd.pose} outside inflated workspace"
                )

        m = mat.node_count
        seg = mat.segment_length
        h = dt / cfg.substeps_per_step
        x = state.node_positions.copy()
        v = state.node_velocities.copy()

        start_l = state.gripper_left
        start_r = state.gripper_right
        dth_l = wrap_angle(left.pose.theta - start_l.theta)
        dth_r = wrap_angle(right.pose.theta - start_r.theta)

        ws = self._solver_workspace(m, h)
        n_it = cfg.iterations_per_substep
        # Per-iteration bending pull giving the preset strength per substep.
        k_bend = 1.0 - (1.0 - mat.bend_stiffness) ** (1.0 / n_it)
        alpha_tilde = mat.stretch_compliance / (h * h)
        threshold = mat.static_friction_threshold
        keep = 1.0 - mat.kinetic_damping

        for s in range(1, cfg.substeps_per_step + 1):
            frac = s / cfg.substeps_per_step
            plx = start_l.x + frac * (left.pose.x - start_l.x)
            ply = start_l.y + frac * (left.pose.y - start_l.y)
            prx = start_r.x + frac * (right.pose.x - start_r.x)
            pry = start_r.y + frac * (right.pose.y - start_r.y)
            th_l = start_l.theta + frac * dth_l
            th_r = start_r.theta + frac * dth_r
            tlx = plx + seg * math.sin(th_l)
            tly = ply - seg * math.cos(th_l)
            trx = prx - seg * math.sin(th_r)
            tr_y = pry + seg * math.cos(th_r)

            # Bulge side for the buckling escape.  The commanded gripper
            # tilts decide it when they agree (the clamps bias which way the
            # slack folds); otherwise the interior nodes' net transverse
            # deviation from the pin-pin chord does; +90 deg off the chord as
            # the last resort for an exactly collinear, untilted squeeze.
            cx, cy = prx - plx, pry - ply
            cn = math.hypot(cx, cy)
            if cn > 1e-12:
                cx, cy = cx / cn, cy / cn
                tip_sum_x = math.sin(th_l) - math.sin(th_r)
                tip_sum_y = math.cos(th_r) - math.cos(th_l)
                side = -cy * tip_sum_x + cx * tip_sum_y
                if abs(side) < 0.15:
                    lean = (
                        -cy * float(np.sum(x[1:-1, 0]) - (m - 2) * plx)
                        + cx * float(np.sum(x[1:-1, 1]) - (m - 2) * ply)
                    )
                    side = lean if abs(lean) > 1e-9 else 1.0
                if side >= 0.0:
                    ws["ux"], ws["uy"] = -cy, cx
                else:
                    ws["ux"], ws["uy"] = cy, -cx
            else:
                ws["ux"], ws["uy"] = 1.0, 0.0

            x_prev = x.copy()
            x[1:-1] += h * v[1:-1]
            x[0, 0] = plx
            x[0, 1] = ply
            x[-1, 0] = prx
            x[-1, 1] = pry

            if alpha_tilde > 0.0:
                ws["lam_even"].fill(0.0)
                ws["lam_odd"].fill(0.0)
            # The buckling escape runs when the chain is already compressed;
            # stiff presets keep it armed because their bending pass trades
            # curvature for compression on every iteration.
            ws["buckling"] = (
                mat.bend_stiffness >= 0.1 or self._any_compressed(x, seg)
            )
            # A taut rope overrules the clamp: forcing the tip direction when
            # the angled placement cannot reach the rest of the chain makes
            # the constraint system infeasible and the projection diverge, so
            # each side yields to tension.
            tension_cap = (TIP_TENSION_SLACK * seg) ** 2
            for _ in range(n_it):
                # End orientation: first interior node sits one segment from
                # the pin along the gripper tilt, unless tension forbids it.
                if (x[2, 0] - tlx) ** 2 + (x[2, 1] - tly) ** 2 <= tension_cap:
                    x[1, 0] = tlx
                    x[1, 1] = tly
                if (x[-3, 0] - trx) ** 2 + (x[-3, 1] - tr_y) ** 2 <= tension_cap:
                    x[-2, 0] = trx
                    x[-2, 1] = tr_y
                if m >= 6 and k_bend > 0.0:
                    self._bend_pass(x, k_bend, ws)
                self._stretch_pass(x, seg, alpha_tilde, ws, "even")
                self._stretch_pass(x, seg, alpha_tilde, ws, "odd")
            # Inextensibility is the hard constraint: finish the substep with
            # stretch-only sweeps so bending can never trade length away,
            # continuing past the base count while violations remain (a
            # near-taut chain needs the extra sweeps to propagate).
            for i in range(STRETCH_FINISH_ITERATIONS + STRETCH_FINISH_EXTRA):
                viol = self._stretch_pass(x, seg, alpha_tilde, ws, "even")
                viol = max(viol, self._stretch_pass(x, seg, alpha_tilde, ws, "odd"))
                if i + 1 >= STRETCH_FINISH_ITERATIONS and viol <= STRETCH_FINISH_TOL * seg:
                    break

            np.subtract(x, x_prev, out=v)
            v *= 1.0 / h
            inner = v[1:-1]
            speed = np.sqrt(inner[:, 0] ** 2 + inner[:, 1] ** 2)
            stuck = np.where(speed < threshold)[0] + 1
            moving = np.where(speed >= threshold)[0] + 1
            x[stuck] = x_prev[stuck]
            v[stuck] = 0.0
            v[moving] *= keep

        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_BOUND):
            raise SimulationDivergedError(
                f"rope state left the sane region at t={state.sim_time + dt:.3f} s"
            )
        return SimState(
            node_positions=x,
            node_velocities=v,
            gripper_left=left.pose,
            gripper_right=right.pose,
            sim_time=state.sim_time + dt,
        )

    def _solver_workspace(self, m: int, h: float) -> dict:
        """Preallocated buffers and constants for the projection sweeps."""
        cached = getattr(self, "_ws_cache", None)
        if cached is not None and cached["m"] == m and cached["h"] == h:
            return cached
        inv_mass = 1.0 / self.material.node_mass
        w = np.full(m, inv_mass)
        w[0] = w[-1] = 0.0
        alpha_tilde = self.material.stretch_compliance / (h * h)
        ws = {"m": m, "h": h}
        for name, lo in (("even", 0), ("odd", 1)):
            a_idx = np.arange(lo, m - 1, 2)
            n = a_idx.size
            wa = w[a_idx].copy()
            wb = w[a_idx + 1].copy()
            inv_denom = 1.0 / np.maximum(wa + wb + alpha_tilde, 1e-12)
            ws[name] = {
                "lo": lo,
                "n": n,
                "wa": wa[:, None].copy(),
                "wb": wb[:, None].copy(),
                "fa_mask": (wa > 0.0).astype(float)[:, None],
                "fb_mask": (wb > 0.0).astype(float)[:, None],
                "inv_denom": inv_denom,
                "d": np.empty((n, 2)),
                "corr": np.empty((n, 2)),
                "kick": np.empty((n, 2)),
                "dist": np.empty(n),
                "dlam": np.empty(n),
                "fac": np.empty(n),
                "mask": np.empty(n, dtype=bool),
            }
            ws[f"lam_{name}"] = np.zeros(n)
        ws["bend_mid"] = np.empty((max(m - 4, 0), 2))
        ws["ux"] = 1.0
        ws["uy"] = 0.0
        ws["buckling"] = False
        self._ws_cache = ws
        return ws

    @staticmethod
    def _any_compressed(x, seg) -> bool:
        d = np.diff(x, axis=0)
        dist2 = np.einsum("ij,ij->i", d, d)
        return bool(np.any(dist2 < (seg * (1.0 - BUCKLE_STRAIN)) ** 2))

    @staticmethod
    def _stretch_pass(x, seg, alpha_tilde, ws, which) -> float:
        """XPBD distance projection over one independent segment set.

        Compressed segments also get a small transverse kick so a chain
        squeezed exactly along its own line buckles instead of contracting; a
        perfectly collinear state is otherwise a fixed point of the
        projection.  Returns the worst pre-projection violation (m).
        """
        s = ws[which]
        lo, n = s["lo"], s["n"]
        a = x[lo:lo + 2 * n - 1:2]
        b = x[lo + 1:lo + 2 * n:2]
        d, corr, dist, dlam = s["d"], s["corr"], s["dist"], s["dlam"]
        np.subtract(b, a, out=d)
        np.multiply(d, d, out=corr)
        np.add(corr[:, 0], corr[:, 1], out=dist)
        np.sqrt(dist, out=dist)
        np.subtract(seg, dist, out=dlam)  # -(C) with C = dist - rest
        worst = float(np.max(np.abs(dlam)))
        buckling = ws["buckling"]
        if buckling:
            mask = s["mask"]
            np.greater(dlam, BUCKLE_STRAIN * seg, out=mask)
            buckling = bool(mask.any())
        if buckling:
            fac = s["fac"]
            np.multiply(dlam, mask, out=fac)
            fac *= BUCKLE_SEED
        if alpha_tilde > 0.0:
            lam = ws[f"lam_{which}"]
            dlam -= alpha_tilde * lam
            dlam *= s["inv_denom"]
            lam += dlam
        else:
            dlam *= s["inv_denom"]
        np.maximum(dist, 1e-12, out=dist)
        dlam /= dist
        np.multiply(d, dlam[:, None], out=d)  # d becomes dlam * direction
        np.multiply(d, s["wa"], out=corr)
        a -= corr
        np.multiply(d, s["wb"], out=corr)
        b += corr
        if buckling:
            # Buckling escape: push both nodes of a compressed segment toward
            # the rope's current bulge side, so squeezed regions bow instead
            # of contracting along their own line.
            kick = s["kick"]
            np.multiply(fac, ws["ux"], out=kick[:, 0])
            np.multiply(fac, ws["uy"], out=kick[:, 1])
            np.multiply(kick, s["fa_mask"], out=corr)
            a += corr
            np.multiply(kick, s["fb_mask"], out=corr)
            b += corr
        return worst

    @staticmethod
    def _bend_pass(x, k_bend, ws):
        """Pull deep-interior nodes toward their neighbour midpoints (Jacobi)."""
        mid = ws["bend_mid"]
        np.add(x[1:-3], x[3:-1], out=mid)
        mid *= 0.5
        np.subtract(mid, x[2:-2], out=mid)
        mid *= k_bend
        x[2:-2] += mid

    # -- measurement -------------------------------------------------------

    def resample(self, state: SimState, n_points: int) -> Shape:
        return resample_shape(state, n_points)

    def shape_rmse(self, state: SimState, goal: Shape, n_points: int | None = None):
        n = goal.n if n_points is None else n_points
        return -reward(goal, self.resample(state, n))


def resample_shape(state: SimState, n_points: int) -> Shape:
    """N points at equal arc length along the node chain, endpoints kept."""
    pts = state.node_positions
    m = pts.shape[0]
    if not 2 <= n_points <= m:
        raise ConfigurationError(f"need 2 <= N <= {m}, got {n_points}")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n_points)
    out = np.column_stack([
        np.interp(targets, s, pts[:, 0]),
        np.interp(targets, s, pts[:, 1]),
    ])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return Shape(out)


def polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def segment_strains(state: SimState, material: MaterialParams) -> np.ndarray:
    """Per-segment |length - rest| / rest."""
    seg = np.linalg.norm(np.diff(state.node_positions, axis=0), axis=1)
    rest = material.segment_length
    return np.abs(seg - rest) / rest
