"""8x8 waypoint navigation gridworld.

The agent must visit four waypoints in order. Every move costs 0.01,
reaching the proper waypoint pays 1 and finishing the fourth pays another 3.
Episodes end on the fourth waypoint or after 200 steps.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import UsageError
from ..kernels import render_nav

GRID = 8
CELL = 5
N_WAYPOINTS = 4
MAX_STEPS = 200
MOVE_COST = -0.01
WAYPOINT_REWARD = 1.0
FINISH_REWARD = 3.0

UP, DOWN, LEFT, RIGHT = range(4)
ACTIONS = ("up", "down", "left", "right")
_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))
_UNPACK = np.arange(256) / 5.0


@dataclass(frozen=True)
class NavState:
    agent: tuple
    waypoints: tuple
    next_waypoint: int = 1  # 1..4, or 5 once all are visited
    step: int = 0

    @property
    def finished(self):
        return self.next_waypoint > N_WAYPOINTS

    @property
    def terminal(self):
        return self.finished or self.step >= MAX_STEPS

    @property
    def target(self):
        return None if self.finished else self.waypoints[self.next_waypoint - 1]


def nav_reset(rng):
    cells = rng.choice(GRID * GRID, size=N_WAYPOINTS + 1, replace=False)
    pos = [tuple(int(v) for v in divmod(int(c), GRID)) for c in cells]
    return NavState(agent=pos[0], waypoints=tuple(pos[1:]))


def nav_step(state, action):
    """Return ``(next_state, reward, terminal)``; off-grid moves stay put but still cost."""
    if state.terminal:
        raise UsageError("episode is over; reset before stepping")
    dr, dc = _DELTAS[int(action)]
    r, c = state.agent[0] + dr, state.agent[1] + dc
    agent = (r, c) if 0 <= r < GRID and 0 <= c < GRID else state.agent
    reward = MOVE_COST
    nxt = state.next_waypoint
    if agent == state.target:
        reward += WAYPOINT_REWARD
        if nxt == N_WAYPOINTS:
            reward += FINISH_REWARD
        nxt += 1
    new = replace(state, agent=agent, next_waypoint=nxt, step=state.step + 1)
    return new, reward, new.terminal


def nav_render(state):
    """(40, 40, 3) image: agent green, unvisited waypoint k red at k/5, rest black."""
    return render_nav(state.agent[0], state.agent[1], state.waypoints, state.next_waypoint, GRID, CELL)


def manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def nav_oracle(state):
    """Optimal step count and score from a fresh state (the grid has no obstacles)."""
    path = (state.agent,) + tuple(state.waypoints)
    steps = sum(manhattan(p, q) for p, q in zip(path[:-1], path[1:]))
    return steps, N_WAYPOINTS * WAYPOINT_REWARD + FINISH_REWARD + MOVE_COST * steps


def greedy_action(state):
    """Shortest-path move toward the current waypoint, rows first."""
    tr, tc = state.target
    r, c = state.agent
    if tr != r:
        return DOWN if tr > r else UP
    return RIGHT if tc > c else LEFT


class NavEnv:
    n_agents = None
    n_actions = 4
    has_outcome = False
    obs_shape = (GRID * CELL, GRID * CELL, 3)

    def __init__(self, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state = None

    def reset(self, rng=None):
        self.state = nav_reset(rng if rng is not None else self.rng)
        return self.render()

    def step(self, action):
        self.state, reward, done = nav_step(self.state, action)
        return self.render(), reward, done, {}

    def render(self):
        return nav_render(self.state)

    # Frames are uniform 5x5 cells with values in multiples of 1/5, so replay
    # keeps one exact uint8 code per cell and channel.
    @staticmethod
    def pack_obs(obs):
        return np.rint(obs[..., ::CELL, ::CELL, :] * 5.0).astype(np.uint8)

    @staticmethod
    def unpack_obs(packed):
        cells = _UNPACK[packed]
        return cells.repeat(CELL, axis=-3).repeat(CELL, axis=-2)
