import numpy as np
import pytest
from scipy import stats

from manet.envs.nav import (
    CELL,
    GRID,
    MAX_STEPS,
    NavEnv,
    NavState,
    greedy_action,
    manhattan,
    nav_oracle,
    nav_render,
    nav_reset,
    nav_step,
)
from manet.errors import UsageError

UP, DOWN, LEFT, RIGHT = range(4)


def cell(img, r, c):
    return img[r * CELL:(r + 1) * CELL, c * CELL:(c + 1) * CELL]


def decode(img):
    """Recover (agent, remaining waypoints in visiting order) from a frame."""
    cells = img[::CELL, ::CELL]
    agent = tuple(int(v) for v in np.argwhere(cells[..., 1] == 1.0)[0])
    reds = [(float(cells[r, c, 0]), (int(r), int(c))) for r, c in np.argwhere(cells[..., 0] > 0)]
    return agent, [pos for _, pos in sorted(reds)]


def test_reset_positions_are_distinct():
    for seed in range(10_000):
        s = nav_reset(np.random.default_rng(seed))
        assert len({s.agent, *s.waypoints}) == 5
        assert s.next_waypoint == 1 and s.step == 0


def test_reset_positions_are_uniform():
    rng = np.random.default_rng(123)
    counts = np.zeros((5, GRID * GRID))
    for _ in range(100_000):
        s = nav_reset(rng)
        for k, (r, c) in enumerate((s.agent, *s.waypoints)):
            counts[k, r * GRID + c] += 1
    for row in counts:
        assert stats.chisquare(row).pvalue > 0.001


def test_reset_is_seeded():
    assert nav_reset(np.random.default_rng(9)) == nav_reset(np.random.default_rng(9))


def line_state():
    return NavState(agent=(2, 0), waypoints=((2, 1), (2, 2), (2, 3), (2, 4)))


def test_step_rewards():
    s = NavState(agent=(5, 5), waypoints=((0, 0), (0, 1), (0, 2), (0, 3)))
    s2, r, done = nav_step(s, UP)
    assert s2.agent == (4, 5) and r == -0.01 and not done
    s = line_state()
    rewards = []
    for _ in range(4):
        s, r, done = nav_step(s, RIGHT)
        rewards.append(r)
    assert rewards == [0.99, 0.99, 0.99, 3.99]
    assert done and s.finished
    with pytest.raises(UsageError):
        nav_step(s, RIGHT)


def test_off_grid_move_costs_and_stays():
    s = NavState(agent=(0, 0), waypoints=((7, 7), (6, 7), (5, 7), (4, 7)))
    s2, r, _ = nav_step(s, UP)
    assert s2.agent == (0, 0) and r == -0.01 and s2.step == 1


def test_wrong_waypoint_has_no_effect():
    s = NavState(agent=(3, 3), waypoints=((0, 0), (3, 4), (5, 5), (6, 6)))
    s2, r, _ = nav_step(s, RIGHT)
    assert r == -0.01 and s2.next_waypoint == 1


def test_timeout_at_step_limit():
    s = NavState(agent=(0, 0), waypoints=((7, 7), (6, 7), (5, 7), (4, 7)))
    for t in range(MAX_STEPS):
        assert not s.terminal
        s, r, done = nav_step(s, UP)
    assert done and s.step == MAX_STEPS


def test_render_examples():
    s = NavState(agent=(1, 2), waypoints=((4, 4), (5, 5), (6, 6), (7, 7)))
    img = nav_render(s)
    assert img.shape == (40, 40, 3) and img.dtype == np.float64
    assert np.array_equal(cell(img, 0, 0), np.zeros((5, 5, 3)))
    assert np.all(cell(img, 1, 2)[..., 1] == 1.0) and np.all(cell(img, 1, 2)[..., [0, 2]] == 0)
    for k, pos in enumerate(s.waypoints, 1):
        patch = cell(img, *pos)
        assert np.all(patch[..., 0] == k / 5) and np.all(patch[..., 1:] == 0)
    assert np.array_equal(img, nav_render(s))


def test_render_after_first_waypoint():
    s = line_state()
    s, _, _ = nav_step(s, RIGHT)
    s, _, _ = nav_step(s, DOWN)  # step off W1 so it would be visible if not removed
    img = nav_render(s)
    cells = img[::CELL, ::CELL]
    red = np.argwhere(cells[..., 0] > 0)
    assert len(red) == 3
    darkest = min(map(tuple, red), key=lambda rc: cells[rc[0], rc[1], 0])
    assert darkest == s.waypoints[1] and cells[darkest][0] == 0.4


def test_agent_color_wins_when_colocated():
    s = NavState(agent=(2, 2), waypoints=((2, 3), (2, 2), (5, 5), (6, 6)))
    img = nav_render(s)
    assert np.array_equal(cell(img, 2, 2)[0, 0], [0.0, 1.0, 0.0])


def test_state_is_recoverable_from_frame():
    rng = np.random.default_rng(4)
    for _ in range(50):
        s = nav_reset(rng)
        while not s.terminal:
            agent, remaining = decode(nav_render(s))
            assert agent == s.agent
            expected = [w for w in s.waypoints[s.next_waypoint - 1:] if w != s.agent]
            assert remaining == expected
            s, _, _ = nav_step(s, int(rng.integers(4)) if rng.random() < 0.5 else greedy_action(s))


def test_oracle_line_example_and_bound():
    assert nav_oracle(line_state()) == pytest.approx((4, 6.96))
    for seed in range(100):
        _, score = nav_oracle(nav_reset(np.random.default_rng(seed)))
        assert score < 7


def test_greedy_policy_attains_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        s = nav_reset(rng)
        steps, best = nav_oracle(s)
        total, n = 0.0, 0
        while not s.terminal:
            s, r, _ = nav_step(s, greedy_action(s))
            total += r
            n += 1
        assert n == steps
        assert total == pytest.approx(best, abs=1e-9)


def test_reward_set_and_score_range():
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(100):
        s, total = nav_reset(rng), 0.0
        while not s.terminal:
            s, r, _ = nav_step(s, int(rng.integers(4)))
            seen.add(round(r, 10))
            total += r
        assert -2 - 1e-9 <= total <= 7 - 0.01 * 1
    assert seen <= {-0.01, 0.99, 3.99}


def test_env_wrapper_and_replay_codec():
    env = NavEnv(np.random.default_rng(1))
    obs = env.reset()
    assert obs.shape == NavEnv.obs_shape
    packed = NavEnv.pack_obs(obs)
    assert packed.shape == (8, 8, 3) and packed.dtype == np.uint8
    assert np.array_equal(NavEnv.unpack_obs(packed), obs)
    frames = [obs]
    done = False
    while not done:
        obs, r, done, info = env.step(greedy_action(env.state))
        frames.append(obs)
    stacked = np.stack(frames)
    assert np.array_equal(NavEnv.unpack_obs(NavEnv.pack_obs(stacked)), stacked)
    assert manhattan((0, 0), (3, 4)) == 7
