"""Deep Q-learning machinery: replay, targets, exploration and the epoch loop."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, EnvironmentFault
from .nn import AdamState, adam_step, backward, mean, no_grad, pick, square, tensor_sum


@dataclass
class Transition:
    obs: np.ndarray
    action: object
    reward: float
    next_obs: np.ndarray
    terminal: bool
    # per-agent alive flags at obs / next_obs; None in single-agent mode
    mask: Optional[np.ndarray] = None
    next_mask: Optional[np.ndarray] = None


@dataclass
class TrainConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    batch_size: int = 32
    replay_capacity: int = 50_000
    target_sync: int = 1_000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int = 100_000
    eval_epsilon: float = 0.05
    epoch_length: int = 10_000
    eval_episodes: int = 100
    warmup: int = 1_000
    lambda_e: float = 0.0
    lambda_d: float = 0.0
    lambda_logit: float = 1e-3
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        for name in ("batch_size", "replay_capacity", "target_sync", "eps_decay_steps",
                     "epoch_length", "eval_episodes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.warmup < 0:
            raise ConfigError("warmup must be non-negative")
        if self.batch_size > self.replay_capacity:
            raise ConfigError("batch_size exceeds replay_capacity")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        for name in ("eps_start", "eps_end", "eval_epsilon"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.eps_end > self.eps_start:
            raise ConfigError("eps_end must not exceed eps_start")
        for name in ("lambda_e", "lambda_d", "lambda_logit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        return self

    def as_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


class ReplayMemory:
    """Fixed-capacity ring buffer sampled uniformly with replacement."""

    def __init__(self, capacity):
        if capacity <= 0:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self.items: list[Transition] = []
        self.pos = 0
        self.pushes = 0

    def __len__(self):
        return len(self.items)

    def push(self, transition):
        if len(self.items) < self.capacity:
            self.items.append(transition)
        else:
            self.items[self.pos] = transition
        self.pos = (self.pos + 1) % self.capacity
        self.pushes += 1
        return self

    def sample(self, batch_size, rng):
        """Return ``batch_size`` transitions, or None while the memory is underfull."""
        if len(self.items) < batch_size:
            return None
        idx = rng.integers(0, len(self.items), size=batch_size)
        return [self.items[i] for i in idx]


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray
    mask: Optional[np.ndarray] = None
    next_mask: Optional[np.ndarray] = None


def collate(transitions, unpack=None):
    multi = transitions[0].mask is not None
    obs = np.stack([t.obs for t in transitions])
    next_obs = np.stack([t.next_obs for t in transitions])
    if unpack is not None:
        obs, next_obs = unpack(obs), unpack(next_obs)
    return Batch(
        obs=obs,
        actions=np.array([t.action for t in transitions], dtype=np.int64),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        next_obs=next_obs,
        terminal=np.array([t.terminal for t in transitions], dtype=np.float64),
        mask=np.stack([t.mask for t in transitions]).astype(np.float64) if multi else None,
        next_mask=np.stack([t.next_mask for t in transitions]).astype(np.float64) if multi else None,
    )


def _td(batch, q_network, target_network, gamma):
    if isinstance(batch, list):
        batch = collate(batch)
    q, aux = q_network.forward(batch.obs)
    chosen = pick(q, batch.actions)
    with no_grad():
        q_next, _ = target_network.forward(batch.next_obs)
    best = q_next.data.max(axis=-1)
    keep = 1.0 - batch.terminal
    if batch.mask is None:
        target = batch.rewards + gamma * keep * best
        return mean(square(chosen - target)), aux
    # Shared reward per agent; agents dead in s' have nothing to bootstrap.
    target = batch.rewards[:, None] + gamma * keep[:, None] * batch.next_mask * best
    err = square(chosen - target) * batch.mask
    return mean(tensor_sum(err, axis=1)), aux


def td_loss(batch, q_network, target_network, gamma):
    """Mean squared TD error; the target network contributes constants only."""
    return _td(batch, q_network, target_network, gamma)[0]


def sync_target(q_network, target_network):
    src, dst = q_network.params, target_network.params
    if list(src) != list(dst) or any(src[k].shape != dst[k].shape for k in src):
        raise ConfigError("target network structure differs from the Q network")
    for k, p in src.items():
        np.copyto(dst[k].data, p.data)
    return target_network


def epsilon_greedy(q_values, epsilon, rng):
    """Greedy action (lowest index on ties) or, with probability epsilon, uniform.

    A 2-d ``q_values`` holds one row per agent and returns one action per row.
    """
    q = np.asarray(q_values, dtype=np.float64)
    rows = q.reshape(-1, q.shape[-1])
    actions = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if rng.random() < epsilon:
            actions[i] = rng.integers(len(row))
        else:
            actions[i] = int(np.argmax(row))
    return int(actions[0]) if q.ndim == 1 else actions


def linear_epsilon(step, config):
    frac = min(1.0, step / config.eps_decay_steps)
    return max(config.eps_end, config.eps_start + frac * (config.eps_end - config.eps_start))


@dataclass
class EpochMetrics:
    epoch: int
    global_steps: int
    mean_score: float
    win_rate: Optional[float]
    mean_loss: float
    epsilon: float


@dataclass
class EvalSummary:
    mean_score: float
    win_rate: Optional[float]
    mean_length: float
    scores: list


def select_action(model, env, obs, epsilon, rng):
    with no_grad():
        q, aux = model.forward(obs[None])
    action = epsilon_greedy(q.data[0], epsilon, rng)
    if getattr(env, "n_agents", None):
        action = np.where(env.alive_mask(), action, env.noop_action)
    return action, q.data[0], aux


def evaluate(model, make_env, episodes, epsilon, seed, on_step: Callable = None):
    """Run ``episodes`` evaluation episodes with fresh rngs derived from ``seed``."""
    env_seed, act_seed = np.random.SeedSequence(seed).spawn(2)
    env = make_env(np.random.default_rng(env_seed))
    rng = np.random.default_rng(act_seed)
    scores, lengths, wins = [], [], 0
    for _ in range(episodes):
        obs = env.reset()
        total, steps, done, info = 0.0, 0, False, {}
        while not done:
            action, q, aux = select_action(model, env, obs, epsilon, rng)
            if on_step is not None:
                on_step(env, obs, q, aux)
            obs, reward, done, info = env.step(action)
            total += reward
            steps += 1
        scores.append(total)
        lengths.append(steps)
        wins += info.get("outcome") == "model-win"
    win_rate = wins / episodes if getattr(env, "has_outcome", False) else None
    return EvalSummary(float(np.mean(scores)), win_rate, float(np.mean(lengths)), scores)


class Trainer:
    """Owns the Q network, its target, replay memory and all training rngs."""

    def __init__(self, make_env, model, config: TrainConfig):
        self.config = config.validate()
        self.make_env = make_env
        self.model = model
        self.target = model.clone()
        self.memory = ReplayMemory(config.replay_capacity)
        self.optim = AdamState(lr=config.lr)
        env_seed, agent_seed = np.random.SeedSequence(config.seed).spawn(2)
        self.env = make_env(np.random.default_rng(env_seed))
        self.rng = np.random.default_rng(agent_seed)
        self.global_step = 0
        self.epoch = 0
        self.obs = None
        self.packed = None

    @property
    def epsilon(self):
        return linear_epsilon(self.global_step, self.config)

    def update(self):
        cfg = self.config
        transitions = self.memory.sample(cfg.batch_size, self.rng)
        if transitions is None:
            return None
        self.model.zero_grad()
        batch = collate(transitions, getattr(self.env, "unpack_obs", None))
        loss, aux = _td(batch, self.model, self.target, cfg.gamma)
        reg = self.model.regularization(aux, cfg)
        total = loss if reg is None else loss + reg
        backward(total)
        adam_step(self.model.params, self.optim)
        return float(total.data)

    def train_epoch(self):
        cfg, env = self.config, self.env
        multi = bool(getattr(env, "n_agents", None))
        pack = getattr(env, "pack_obs", None) or (lambda o: o)
        losses = []
        for _ in range(cfg.epoch_length):
            if self.obs is None:
                self.obs = env.reset()
                self.packed = pack(self.obs)
            mask = env.alive_mask() if multi else None
            action, _, _ = select_action(self.model, env, self.obs, self.epsilon, self.rng)
            try:
                next_obs, reward, done, _ = env.step(action)
            except Exception as exc:
                raise EnvironmentFault(self.global_step, exc) from exc
            # consecutive transitions share the packed frame object
            packed_next = pack(next_obs)
            self.memory.push(Transition(
                self.packed, action, reward, packed_next, done,
                mask, env.alive_mask() if multi else None,
            ))
            self.global_step += 1
            if self.global_step >= cfg.warmup:
                loss = self.update()
                if loss is not None:
                    losses.append(loss)
            if self.global_step % cfg.target_sync == 0:
                sync_target(self.model, self.target)
            self.obs = None if done else next_obs
            self.packed = packed_next
        self.epoch += 1
        summary = evaluate(self.model, self.make_env, cfg.eval_episodes, cfg.eval_epsilon,
                           seed=[cfg.seed, self.epoch])
        return EpochMetrics(
            epoch=self.epoch,
            global_steps=self.global_step,
            mean_score=summary.mean_score,
            win_rate=summary.win_rate,
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
            epsilon=self.epsilon,
        )
