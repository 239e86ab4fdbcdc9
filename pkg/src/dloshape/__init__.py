"""Planar rope shape-control lab.

A particle-rope simulator with pinned grippers and table friction, the
goal-conditioned MDP encodings around it, offline data collection with
hindsight goal relabeling, a from-scratch TD3+BC trainer, a
diminishing-rigidity shape-servoing baseline, and the evaluation drivers
that compare them on sequences of goal shapes.
"""

from .errors import (
    ConfigurationError,
    DatasetFormatError,
    DegenerateGeometryError,
    DimensionError,
    EvaluationError,
    ModeInfeasibleError,
    RejectedCommandError,
    SimulationDivergedError,
    TrainingDivergedError,
)
from .mdp import (
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
)
from .sim import (
    ELASTIC,
    PRESETS,
    SOFT,
    ArmCommand,
    MaterialParams,
    RopeSimulator,
    SimConfig,
    SimState,
    material_preset,
    resample_shape,
    segment_strains,
)
from .motion import CubicTrajectory, MotionParams, PdGains, pd_track, plan, sample
from .control import ControlSession
from .data import (
    Dataset,
    Episode,
    MotionCommand,
    Step,
    collect,
    relabel,
    sample_command,
    split,
)
from .dataset_io import load_dataset, save_dataset
from .nets import D2rlNetSpec, D2rlNetwork
from .td3bc import PolicyParams, TrainConfig, compute_lambda, train
from .policy_file import load_policy, save_policy
from .servo import ServoConfig, dr_jacobian, servo_step
from .evaluate import (
    EvalReport,
    GoalSequence,
    BaselineRunner,
    PolicyRunner,
    emit_artifacts,
    make_goal_sequence,
    run_eval,
    sweep_alpha,
    sweep_augmentation,
)

__version__ = "0.1.0"
