"""Offline TD3+BC on flattened transition tables.

Twin critics regress to a clipped-double-Q target with smoothed target
actions; the actor maximizes Q1 against a behavior-cloning anchor, with the
Q term weighted by lambda = mean(alpha / |Q|) over the batch.  A pure
behavior-cloning mode shares the same loop and random streams, so the two
trainers coincide exactly when alpha is zero.

Everything is deterministic given the config seed: batches, dropout masks,
target noise, and initialization each draw from their own spawned stream.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset, to_transitions
from .errors import ConfigurationError, EvaluationError, TrainingDivergedError
from .mdp import ACTION_DIM, INPUT_DIM, Workspace, action_bounds
from .nets import Adam, D2rlNetSpec, D2rlNetwork

log = logging.getLogger(__name__)

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    alpha: float = 2.5
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    total_steps: int = 1_000_000
    seed: int = 0
    algo: str = "td3bc"  # "td3bc" or "bc"
    # "batch_mean": lambda = alpha / mean|Q| (reference TD3+BC; bounded on
    # dense-reward data).  "per_sample": lambda = mean(alpha / |Q_i|), which
    # diverges as relabeled near-goal states drive some |Q_i| toward zero.
    lambda_form: str = "batch_mean"
    lambda_on_dataset_actions: bool = False
    dtype: str = "float64"
    hidden_layers: int = 4
    hidden_width: int = 256
    dropout_rate: float = 0.5
    batch_norm: bool = True
    log_every: int = 1000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        for name in ("actor_lr", "critic_lr", "adam_beta1", "adam_beta2",
                     "adam_eps", "tau", "target_noise_clip"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.target_noise_sigma < 0:
            raise ConfigurationError("target_noise_sigma must be >= 0")
        if self.batch_size < 1 or self.policy_delay < 1 or self.total_steps < 0:
            raise ConfigurationError("batch_size/policy_delay/total_steps out of range")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if self.algo not in ("td3bc", "bc"):
            raise ConfigurationError(f"unknown algo {self.algo!r}")
        if self.lambda_form not in ("batch_mean", "per_sample"):
            raise ConfigurationError(f"unknown lambda_form {self.lambda_form!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError(f"unsupported dtype {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class PolicyParams:
    """Live and target networks plus the input/output scaling they assume."""

    actor: D2rlNetwork
    q1: D2rlNetwork
    q2: D2rlNetwork
    target_actor: D2rlNetwork
    target_q1: D2rlNetwork
    target_q2: D2rlNetwork
    state_mean: np.ndarray
    state_std: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray

    @property
    def dtype(self):
        return self.actor.dtype

    def normalize_state(self, s: np.ndarray) -> np.ndarray:
        return ((s - self.state_mean) / self.state_std).astype(self.dtype)

    def normalize_action(self, a: np.ndarray) -> np.ndarray:
        span = self.action_high - self.action_low
        return (2.0 * (a - self.action_low) / span - 1.0).astype(self.dtype)

    def squash(self, y: np.ndarray):
        """Bounded output map: low + (tanh(y)+1)/2 * span, with its cache."""
        t = np.tanh(y)
        half_span = 0.5 * (self.action_high - self.action_low)
        return self.action_low + (t + 1.0) * half_span, t

    def squash_grad(self, t: np.ndarray) -> np.ndarray:
        half_span = 0.5 * (self.action_high - self.action_low)
        return half_span * (1.0 - t * t)


def default_specs(config: TrainConfig) -> tuple:
    actor = D2rlNetSpec(
        input_dim=INPUT_DIM, output_dim=ACTION_DIM,
        hidden_layers=config.hidden_layers, hidden_width=config.hidden_width,
        dropout_rate=config.dropout_rate, batch_norm=config.batch_norm,
    )
    critic = D2rlNetSpec(
        input_dim=INPUT_DIM + ACTION_DIM, output_dim=1,
        hidden_layers=config.hidden_layers, hidden_width=config.hidden_width,
        dropout_rate=config.dropout_rate, batch_norm=config.batch_norm,
    )
    return actor, critic


def make_policy_params(config: TrainConfig, state_mean, state_std,
                       workspace: Workspace = Workspace()) -> PolicyParams:
    """Fresh live networks (seeded) with target copies."""
    actor_spec, critic_spec = default_specs(config)
    dtype = config.np_dtype
    ss = np.random.SeedSequence(config.seed)
    init_actor, init_q1, init_q2 = (np.random.default_rng(c) for c in ss.spawn(3))
    actor = D2rlNetwork(actor_spec, init_actor, dtype=dtype)
    q1 = D2rlNetwork(critic_spec, init_q1, dtype=dtype)
    q2 = D2rlNetwork(critic_spec, init_q2, dtype=dtype)
    low, high = action_bounds(workspace)
    return PolicyParams(
        actor=actor, q1=q1, q2=q2,
        target_actor=actor.copy(), target_q1=q1.copy(), target_q2=q2.copy(),
        state_mean=np.asarray(state_mean, dtype=dtype),
        state_std=np.maximum(np.asarray(state_std, dtype=dtype), STD_FLOOR),
        action_low=low.astype(dtype), action_high=high.astype(dtype),
    )


def actor_forward(params: PolicyParams, x: np.ndarray, mode: str = "eval",
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Policy action(s) for encoded input(s); always inside the action bounds."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.state_mean.shape[0]:
        raise EvaluationError(f"input width {x.shape[1]} != {params.state_mean.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError("non-finite policy input")
    train = mode == "train"
    if train and rng is None:
        raise ConfigurationError("train-mode forward needs an rng for dropout")
    y, _ = params.actor.forward(params.normalize_state(x), train=train, dropout_rng=rng)
    a, _ = params.squash(y)
    return a[0] if single else a


def critic_forward(params: PolicyParams, x: np.ndarray, action: np.ndarray,
                   which: str = "q1") -> np.ndarray:
    """Value estimate(s); `which` is q1, q2, or targets (clipped double-Q)."""
    x = np.asarray(x, dtype=float)
    action = np.asarray(action, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        action = action[None, :]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(action))):
        raise EvaluationError("non-finite critic input")
    xin = np.concatenate([params.normalize_state(x), params.normalize_action(action)], axis=1)
    if which == "q1":
        v, _ = params.q1.forward(xin, train=False)
    elif which == "q2":
        v, _ = params.q2.forward(xin, train=False)
    elif which == "targets":
        v1, _ = params.target_q1.forward(xin, train=False)
        v2, _ = params.target_q2.forward(xin, train=False)
        v = np.minimum(v1, v2)
    else:
        raise ConfigurationError(f"unknown critic head {which!r}")
    v = v[:, 0]
    return float(v[0]) if single else v


def compute_lambda(q_values: np.ndarray, alpha: float) -> float:
    """Batch BC weight: mean over samples of alpha / |Q|, |Q| floored at 1e-8."""
    q = np.abs(np.asarray(q_values, dtype=float)).reshape(-1)
    if q.size < 1:
        raise ConfigurationError("compute_lambda needs at least one Q value")
    return float(np.mean(alpha / np.maximum(q, 1e-8)))


def batch_mean_lambda(q_values: np.ndarray, alpha: float) -> float:
    """Reference TD3+BC weight: alpha / mean|Q|, mean floored at 1e-8.

    Unlike the per-sample ratio mean, this stays bounded when individual Q
    values legitimately approach zero (states already at their goal).
    """
    q = np.abs(np.asarray(q_values, dtype=float)).reshape(-1)
    if q.size < 1:
        raise ConfigurationError("batch_mean_lambda needs at least one Q value")
    return float(alpha / max(float(np.mean(q)), 1e-8))


class Trainer:
    """Update loop state: networks, optimizers, and random streams."""

    def __init__(self, params: PolicyParams, transitions: dict, config: TrainConfig):
        self.params = params
        self.config = config
        dtype = config.np_dtype
        n = transitions["state"].shape[0]
        if config.batch_size > n:
            raise ConfigurationError(
                f"batch_size {config.batch_size} exceeds {n} transitions"
            )
        self.state = params.normalize_state(transitions["state"])
        self.next_state = params.normalize_state(transitions["next_state"])
        self.action = np.asarray(transitions["action"], dtype=dtype)
        self.action_norm = params.normalize_action(self.action)
        self.reward = np.asarray(transitions["reward"], dtype=dtype)
        self.done = np.asarray(transitions["done"], dtype=dtype)
        self.n = n

        ss = np.random.SeedSequence(config.seed)
        ss.spawn(3)  # initialization streams, consumed by make_policy_params
        batch_ss, actor_drop_ss, critic_drop_ss, noise_ss = ss.spawn(4)
        self.batch_rng = np.random.default_rng(batch_ss)
        self.actor_drop_rng = np.random.default_rng(actor_drop_ss)
        self.critic_drop_rng = np.random.default_rng(critic_drop_ss)
        self.noise_rng = np.random.default_rng(noise_ss)

        self.adam_actor = Adam(params.actor.flat_params.size, config.actor_lr,
                               config.adam_beta1, config.adam_beta2,
                               config.adam_eps, dtype=dtype)
        self.adam_q1 = Adam(params.q1.flat_params.size, config.critic_lr,
                            config.adam_beta1, config.adam_beta2,
                            config.adam_eps, dtype=dtype)
        self.adam_q2 = Adam(params.q2.flat_params.size, config.critic_lr,
                            config.adam_beta1, config.adam_beta2,
                            config.adam_eps, dtype=dtype)

        span = (params.action_high - params.action_low).astype(dtype)
        # Noise is defined on the normalized [-1, 1] action scale.
        self.noise_sigma = np.full(ACTION_DIM, config.target_noise_sigma, dtype=dtype)
        self.noise_clip = np.full(ACTION_DIM, config.target_noise_clip, dtype=dtype)
        self.step_count = 0

    # -- single update ------------------------------------------------------

    def update(self) -> dict:
        cfg = self.config
        idx = self.batch_rng.integers(0, self.n, size=cfg.batch_size)
        s = self.state[idx]
        a = self.action[idx]
        a_norm = self.action_norm[idx]
        metrics = {"step": self.step_count}

        if cfg.algo == "td3bc":
            metrics.update(self._critic_update(idx, s, a_norm))
        if self.step_count % cfg.policy_delay == 0:
            metrics.update(self._actor_update(s, a, a_norm))
            if cfg.algo == "td3bc":
                self.params.target_actor.polyak_from(self.params.actor, cfg.tau)
                self.params.target_q1.polyak_from(self.params.q1, cfg.tau)
                self.params.target_q2.polyak_from(self.params.q2, cfg.tau)
        self.step_count += 1
        return metrics

    def td_target(self, s2, r, done) -> np.ndarray:
        """y = r + gamma * (1 - done) * min(Q1', Q2') at the smoothed target action."""
        cfg = self.config
        p = self.params
        y2, _ = p.target_actor.forward(s2, train=False)
        a2_norm = np.tanh(y2)  # target policy on the normalized action scale
        noise = self.noise_rng.normal(0.0, 1.0, size=a2_norm.shape).astype(p.dtype)
        noise = np.clip(noise * self.noise_sigma, -self.noise_clip, self.noise_clip)
        a2_norm = np.clip(a2_norm + noise, -1.0, 1.0)
        xin2 = np.concatenate([s2, a2_norm], axis=1)
        q1t, _ = p.target_q1.forward(xin2, train=False)
        q2t, _ = p.target_q2.forward(xin2, train=False)
        target_q = np.minimum(q1t[:, 0], q2t[:, 0])
        return r + cfg.gamma * (1.0 - done) * target_q

    def _critic_update(self, idx, s, a_norm) -> dict:
        cfg = self.config
        p = self.params
        b = s.shape[0]
        y = self.td_target(self.next_state[idx], self.reward[idx], self.done[idx])

        xin = np.concatenate([s, a_norm], axis=1)
        q1, cache1 = p.q1.forward(xin, train=True, dropout_rng=self.critic_drop_rng)
        q2, cache2 = p.q2.forward(xin, train=True, dropout_rng=self.critic_drop_rng)
        e1 = q1[:, 0] - y
        e2 = q2[:, 0] - y
        critic_loss = float(np.mean(e1 * e1) + np.mean(e2 * e2))
        if not np.isfinite(critic_loss):
            raise TrainingDivergedError(self.step_count, "critic loss diverged")
        mean_abs_q = float(np.mean(np.abs(q1[:, 0])))
        self._last_q_dataset = q1[:, 0].copy()
        p.q1.backward(cache1, (2.0 / b) * e1[:, None])
        self.adam_q1.step(p.q1.flat_params, p.q1.flat_grads)
        p.q2.backward(cache2, (2.0 / b) * e2[:, None])
        self.adam_q2.step(p.q2.flat_params, p.q2.flat_grads)
        return {"critic_loss": critic_loss, "mean_abs_q": mean_abs_q}

    def _actor_update(self, s, a, a_norm) -> dict:
        cfg = self.config
        p = self.params
        b = s.shape[0]
        y, cache_a = p.actor.forward(s, train=True, dropout_rng=self.actor_drop_rng)
        t = np.tanh(y)  # policy action on the normalized scale
        diff = t - a_norm
        bc_loss = float(np.mean(np.sum(diff * diff, axis=1)))
        dt_bc = (2.0 / b) * diff

        if cfg.algo == "bc":
            dy = dt_bc * (1.0 - t * t)
            p.actor.backward(cache_a, dy)
            self.adam_actor.step(p.actor.flat_params, p.actor.flat_grads)
            if not np.isfinite(bc_loss):
                raise TrainingDivergedError(self.step_count, "actor loss diverged")
            return {"actor_loss": bc_loss, "bc_loss": bc_loss, "lambda": 0.0}

        xin = np.concatenate([s, t], axis=1)
        qv, cache_q = p.q1.forward(xin, train=True, dropout_rng=self.critic_drop_rng)
        lambda_fn = batch_mean_lambda if cfg.lambda_form == "batch_mean" else compute_lambda
        if cfg.lambda_on_dataset_actions:
            lam = lambda_fn(self._last_q_dataset, cfg.alpha)
        else:
            lam = lambda_fn(qv[:, 0], cfg.alpha)
        actor_loss = float(-lam * np.mean(qv[:, 0]) + bc_loss)
        if not np.isfinite(actor_loss):
            raise TrainingDivergedError(self.step_count, "actor loss diverged")
        dq = np.full((b, 1), -lam / b, dtype=p.dtype)
        _, dxin = p.q1.backward(cache_q, dq)
        dt_q = dxin[:, self.state.shape[1]:]
        dy = (dt_q + dt_bc) * (1.0 - t * t)
        p.actor.backward(cache_a, dy)
        self.adam_actor.step(p.actor.flat_params, p.actor.flat_grads)
        return {
            "actor_loss": actor_loss,
            "bc_loss": bc_loss,
            "lambda": lam,
            "mean_abs_q_pi": float(np.mean(np.abs(qv))),
        }


def state_normalization(transitions: dict) -> tuple:
    s = np.asarray(transitions["state"], dtype=float)
    return s.mean(axis=0), np.maximum(s.std(axis=0), STD_FLOOR)


def train(dataset, config: TrainConfig, workspace: Workspace = Workspace()):
    """Full offline run; returns the trained PolicyParams."""
    transitions = to_transitions(dataset) if isinstance(dataset, Dataset) else dataset
    if transitions["state"].shape[0] < 1:
        raise ConfigurationError("no transitions to train on")
    mean, std = state_normalization(transitions)
    params = make_policy_params(config, mean, std, workspace)
    trainer = Trainer(params, transitions, config)
    for step in range(config.total_steps):
        metrics = trainer.update()
        if config.log_every and step % config.log_every == 0:
            log.info(
                "step %d: critic %.5f actor %.5f lambda %.4f |Q| %.4f",
                step,
                metrics.get("critic_loss", float("nan")),
                metrics.get("actor_loss", float("nan")),
                metrics.get("lambda", float("nan")),
                metrics.get("mean_abs_q", float("nan")),
            )
    return params
