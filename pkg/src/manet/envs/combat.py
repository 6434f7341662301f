"""15x15 two-team combat gridworld with scripted bots.

Five learner-controlled agents fight five bots. Every unit has 3 health,
sees its 5x5 surroundings and may move, attack an enemy (by index) standing
in its 3x3 neighbourhood, or wait. An effective attack costs one step of
cool-down. Actions of all ten units resolve simultaneously: moves first in a
random priority order, then attacks against post-move positions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from ..kernels import encode_views, spot_targets

GRID = 15
TEAM_SIZE = 5
MAX_HEALTH = 3
MAX_STEPS = 80
MODEL, BOT = 0, 1
STARTS = ((3, 3), (11, 11))

UP, DOWN, LEFT, RIGHT = range(4)
ATTACK = 4  # ATTACK + k targets enemy index k + 1
NOOP = 9
N_ACTIONS = 10
_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

WIN_REWARD = 3.0
LOSS_REWARD = -3.0
HIT_REWARD = 1.0

ONGOING, MODEL_WIN, BOT_WIN, TIMEOUT = "ongoing", "model-win", "bot-win", "timeout"


@dataclass
class UnitState:
    row: int
    col: int
    team: int
    index: int
    health: int
    cooldown: int

    @property
    def alive(self):
        return self.health > 0


@dataclass
class CombatState:
    """Units 0-4 are the learner's team, 5-9 the bots (index = id % 5 + 1)."""

    rows: np.ndarray
    cols: np.ndarray
    health: np.ndarray
    cooldown: np.ndarray
    step: int = 0
    spotted: bool = False
    outcome: str = ONGOING
    team: np.ndarray = field(default_factory=lambda: np.repeat([MODEL, BOT], TEAM_SIZE))
    index: np.ndarray = field(default_factory=lambda: np.tile(np.arange(1, TEAM_SIZE + 1), 2))

    @property
    def alive(self):
        return self.health > 0

    @property
    def terminal(self):
        return self.outcome != ONGOING

    def unit(self, u):
        return UnitState(int(self.rows[u]), int(self.cols[u]), int(self.team[u]),
                         int(self.index[u]), int(self.health[u]), int(self.cooldown[u]))

    def copy(self):
        return CombatState(self.rows.copy(), self.cols.copy(), self.health.copy(),
                           self.cooldown.copy(), self.step, self.spotted, self.outcome,
                           self.team, self.index)


def combat_reset(rng):
    rows, cols = [], []
    for sr, sc in STARTS:
        for cell in rng.choice(9, size=TEAM_SIZE, replace=False):
            dr, dc = divmod(int(cell), 3)
            rows.append(sr + dr - 1)
            cols.append(sc + dc - 1)
    n = 2 * TEAM_SIZE
    return CombatState(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                       np.full(n, MAX_HEALTH, dtype=np.int64), np.zeros(n, dtype=np.int64))


def _chebyshev(s, a, b):
    return max(abs(s.rows[a] - s.rows[b]), abs(s.cols[a] - s.cols[b]))


def bot_policy(state, rng):
    """Actions for the five bots; latches ``state.spotted`` in place.

    Bots wander until any of them sees a learner agent. From then on each
    bot heads for (and attacks, when adjacent and ready) the nearest agent
    currently visible to the bot team, wandering while none is visible.
    """
    visible, target = spot_targets(state.rows, state.cols, state.team, state.health, BOT)
    if visible.any():
        state.spotted = True
    actions = np.full(TEAM_SIZE, NOOP, dtype=np.int64)
    for b in range(TEAM_SIZE, 2 * TEAM_SIZE):
        if state.health[b] <= 0:
            continue
        t = target[b]
        if not state.spotted or t < 0:
            actions[b - TEAM_SIZE] = rng.integers(4)
        elif _chebyshev(state, b, t) <= 1 and state.cooldown[b] == 0:
            actions[b - TEAM_SIZE] = ATTACK + state.index[t] - 1
        elif state.rows[t] != state.rows[b]:
            actions[b - TEAM_SIZE] = DOWN if state.rows[t] > state.rows[b] else UP
        else:
            actions[b - TEAM_SIZE] = RIGHT if state.cols[t] > state.cols[b] else LEFT
    return actions


def combat_step(state, model_actions, rng):
    """Advance one step; returns ``(next_state, shared_reward, terminal, outcome)``."""
    if state.terminal:
        raise UsageError("episode is over; reset before stepping")
    s = state.copy()
    model_actions = np.asarray(model_actions, dtype=np.int64)
    if model_actions.shape != (TEAM_SIZE,):
        raise UsageError(f"expected {TEAM_SIZE} actions, got shape {model_actions.shape}")
    if ((model_actions < 0) | (model_actions >= N_ACTIONS)).any():
        raise UsageError("action index out of range")
    actions = np.concatenate([model_actions, bot_policy(s, rng)])
    alive = s.alive
    actions[~alive] = NOOP

    occ = np.full((GRID, GRID), -1, dtype=np.int64)
    occ[s.rows[alive], s.cols[alive]] = np.flatnonzero(alive)
    for u in rng.permutation(2 * TEAM_SIZE):
        a = actions[u]
        if a >= ATTACK:
            continue
        r, c = s.rows[u] + _DELTAS[a][0], s.cols[u] + _DELTAS[a][1]
        if 0 <= r < GRID and 0 <= c < GRID and occ[r, c] < 0:
            occ[s.rows[u], s.cols[u]] = -1
            occ[r, c] = u
            s.rows[u], s.cols[u] = r, c

    hits = np.zeros(2 * TEAM_SIZE, dtype=np.int64)
    fired = np.zeros(2 * TEAM_SIZE, dtype=bool)
    for u in range(2 * TEAM_SIZE):
        a = actions[u]
        if not ATTACK <= a < NOOP or s.cooldown[u] != 0:
            continue
        t = (a - ATTACK) + (TEAM_SIZE if s.team[u] == MODEL else 0)
        if s.health[t] > 0 and _chebyshev(s, u, t) <= 1:
            hits[t] += 1
            fired[u] = True
    # simultaneous damage; blows beyond a unit's remaining health are wasted
    damage = np.minimum(hits, s.health)
    s.health = s.health - damage
    s.cooldown = fired.astype(np.int64)
    s.step += 1

    reward = HIT_REWARD * float(damage[TEAM_SIZE:].sum())
    model_alive = (s.health[:TEAM_SIZE] > 0).any()
    bots_alive = (s.health[TEAM_SIZE:] > 0).any()
    if not bots_alive:
        s.outcome = MODEL_WIN
        reward += WIN_REWARD
    elif not model_alive or s.step >= MAX_STEPS:
        s.outcome = BOT_WIN if not model_alive else TIMEOUT
        reward += LOSS_REWARD - float(s.health[TEAM_SIZE:].sum())
    return s, reward, s.terminal, s.outcome


def observe_all(state, normalize=True):
    """(5, 150) observations of the learner's agents; dead agents are all zero."""
    return encode_views(state.rows, state.cols, state.team, state.index, state.health,
                        state.cooldown, np.arange(TEAM_SIZE), GRID, normalize)


def combat_observe(state, agent, normalize=True):
    return encode_views(state.rows, state.cols, state.team, state.index, state.health,
                        state.cooldown, np.array([agent]), GRID, normalize)[0]


def format_units(state):
    """Text table of every unit, one row each (episode trace format)."""
    lines = [f"step {state.step} outcome {state.outcome} spotted {int(state.spotted)}",
             "unit team idx row col hp cd"]
    for u in range(2 * TEAM_SIZE):
        t = "model" if state.team[u] == MODEL else "bot"
        lines.append(f"{u:>4} {t:>5} {state.index[u]:>3} {state.rows[u]:>3} {state.cols[u]:>3} "
                     f"{state.health[u]:>2} {state.cooldown[u]:>2}")
    return "\n".join(lines)


def render_frame(state):
    """(15, 15, 3) picture: agents green, bots red, brightness by health."""
    img = np.zeros((GRID, GRID, 3))
    for u in np.flatnonzero(state.alive):
        img[state.rows[u], state.cols[u], 1 if state.team[u] == MODEL else 0] = (
            state.health[u] / MAX_HEALTH)
    return img


class CombatEnv:
    n_agents = TEAM_SIZE
    n_actions = N_ACTIONS
    noop_action = NOOP
    has_outcome = True
    obs_shape = (TEAM_SIZE, 150)

    def __init__(self, rng=None, normalize=True, trace=False):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.normalize = normalize
        self.trace = [] if trace else None
        self.state = None

    def reset(self, rng=None):
        if rng is not None:
            self.rng = rng
        self.state = combat_reset(self.rng)
        if self.trace is not None:
            self.trace.append(format_units(self.state))
        return self.observe()

    def observe(self):
        return observe_all(self.state, self.normalize)

    def alive_mask(self):
        return self.state.health[:TEAM_SIZE] > 0

    def step(self, actions):
        self.state, reward, done, outcome = combat_step(self.state, actions, self.rng)
        if self.trace is not None:
            self.trace.append(format_units(self.state))
        return self.observe(), reward, done, {"outcome": outcome}

    def render(self):
        return render_frame(self.state)
