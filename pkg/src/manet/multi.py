"""Multi-agent attentive communication Q-network and its baselines.

Each agent's observation is a partial state. From it the shared feature
network derives a key, a per-agent selector and a value. Agent ``i`` attends
over all agents (itself included) with its own selector, pools their values
into a communication feature and estimates its Q values from
``[own value, communication feature]``.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .nn import Model, concat, leaky_relu, matmul, mean, mlp_forward, reshape, softmax, square, swap_last


def _check_obs(obs, width):
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != width:
        raise ConfigError(f"observation width {obs.shape[-1]} does not match expected {width}")
    return obs


def agent_features(observations, model):
    """Per-agent (keys, selectors, values) for (…, K, obs_dim) observations."""
    obs = _check_obs(observations, model.obs_dim)
    common = mlp_forward(obs, model.ff_layers)
    keys = matmul(common, model.w_key)
    selectors = matmul(common, model.w_sel)
    values = leaky_relu(matmul(common, model.w_val))
    return keys, selectors, values


def comm_logits(keys, selectors):
    """Entry (i, j) is agent i's selector dotted with agent j's key."""
    return matmul(selectors, swap_last(keys))


def comm_attention(keys, selectors):
    """Row-stochastic (…, K, K) matrix; row i is where agent i listens."""
    return softmax(comm_logits(keys, selectors), axis=-1)


def comm_q(att, values, model):
    comm = matmul(att, values)
    return mlp_forward(concat([values, comm], axis=-1), model.q_layers)


def logit_penalty(logits, lam):
    return mean(square(logits)) * lam


def logit_reg(selectors, keys, lam):
    """``lam`` times the mean squared attention logit; keeps logits from diverging."""
    return logit_penalty(comm_logits(keys, selectors), lam)


class ManetMulti(Model):
    multi_agent = True
    model_id = "manet"

    def __init__(self, obs_dim=150, n_actions=10, ff_hidden=(128, 128), key_dim=16,
                 val_dim=64, q_hidden=128, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.arch = dict(ff_hidden=tuple(ff_hidden), key_dim=key_dim, val_dim=val_dim,
                         q_hidden=q_hidden)
        self.ff_layers = self.add_mlp(rng, "ff", [obs_dim, *ff_hidden])
        width = ff_hidden[-1]
        self.w_key, _ = self.add_dense(rng, "key", width, key_dim, bias=False)
        self.w_sel, _ = self.add_dense(rng, "sel", width, key_dim, bias=False)
        self.w_val, _ = self.add_dense(rng, "val", width, val_dim, bias=False)
        self.q_layers = self.add_mlp(rng, "q", [2 * val_dim, q_hidden, n_actions],
                                     final_activation="identity")

    def forward(self, observations):
        """(B, K, obs_dim) -> (Q of shape (B, K, actions), aux with attention and logits)."""
        keys, selectors, values = agent_features(observations, self)
        logits = comm_logits(keys, selectors)
        att = softmax(logits, axis=-1)
        return comm_q(att, values, self), {"attention": att, "logits": logits}

    def regularization(self, aux, config):
        if not config.lambda_logit:
            return None
        return logit_penalty(aux["logits"], config.lambda_logit)


class NoCommBaseline(Model):
    """Each agent maps its own value feature to Q values; no cross-agent term."""

    multi_agent = True
    model_id = "nocomm"

    def __init__(self, obs_dim=150, n_actions=10, ff_hidden=(128, 128), val_dim=64,
                 q_hidden=128, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.arch = dict(ff_hidden=tuple(ff_hidden), val_dim=val_dim, q_hidden=q_hidden)
        self.ff_layers = self.add_mlp(rng, "ff", [obs_dim, *ff_hidden])
        self.w_val, _ = self.add_dense(rng, "val", ff_hidden[-1], val_dim, bias=False)
        self.q_layers = self.add_mlp(rng, "q", [val_dim, q_hidden, n_actions],
                                     final_activation="identity")

    def forward(self, observations):
        obs = _check_obs(observations, self.obs_dim)
        values = leaky_relu(matmul(mlp_forward(obs, self.ff_layers), self.w_val))
        return mlp_forward(values, self.q_layers), {}


class DenseBaseline(Model):
    """One network from all agents' concatenated observations to all agents' Q values."""

    multi_agent = True
    model_id = "dense"

    def __init__(self, obs_dim=150, n_agents=5, n_actions=10, hidden=(256, 256), rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.arch = dict(hidden=tuple(hidden))
        self.layers = self.add_mlp(rng, "fc", [n_agents * obs_dim, *hidden, n_agents * n_actions],
                                   final_activation="identity")

    def forward(self, observations):
        obs = _check_obs(observations, self.obs_dim)
        if obs.shape[-2] != self.n_agents:
            raise ConfigError(f"expected {self.n_agents} agents, got {obs.shape[-2]}")
        flat = obs.reshape(obs.shape[:-2] + (self.n_agents * self.obs_dim,))
        out = mlp_forward(flat, self.layers)
        return reshape(out, obs.shape[:-2] + (self.n_agents, self.n_actions)), {}
