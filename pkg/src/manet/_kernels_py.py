"""Reference implementations of the environment hot loops.

Kept line-for-line equivalent to ``_kernels.pyx``; ``manet.kernels`` picks
the compiled module when it is importable.
"""
import numpy as np

VIEW = 2


def render_nav(agent_row, agent_col, waypoints, next_waypoint, grid=8, cell=5):
    """Paint the navigation grid as a (grid*cell, grid*cell, 3) float image.

    Unvisited waypoint ``k`` (1-based) is red with intensity k/5; the agent
    is pure green and wins over any co-located waypoint.
    """
    img = np.zeros((grid * cell, grid * cell, 3), dtype=np.float64)
    for k in range(next_waypoint - 1, len(waypoints)):
        r, c = waypoints[k]
        img[r * cell:(r + 1) * cell, c * cell:(c + 1) * cell, 0] = (k + 1) / 5.0
    img[agent_row * cell:(agent_row + 1) * cell, agent_col * cell:(agent_col + 1) * cell] = (0.0, 1.0, 0.0)
    return img


def encode_views(rows, cols, team, index, health, cooldown, observers, grid, normalize):
    """One flattened 5x5x6 view per observer; dead observers get all zeros.

    Each cell holds (x, y, index, team, health, cool-time) where team is +1
    for the observer's side, -1 for the enemy and 0 for an empty cell.
    """
    n = len(rows)
    occ = np.full((grid, grid), -1, dtype=np.int64)
    for u in range(n):
        if health[u] > 0:
            occ[rows[u], cols[u]] = u
    div_xy = (grid - 1) if normalize else 1.0
    div_idx = 5.0 if normalize else 1.0
    div_hp = 3.0 if normalize else 1.0
    out = np.zeros((len(observers), 150), dtype=np.float64)
    for o_i, o in enumerate(observers):
        if health[o] <= 0:
            continue
        k = 0
        for dr in range(-VIEW, VIEW + 1):
            for dc in range(-VIEW, VIEW + 1):
                r = rows[o] + dr
                c = cols[o] + dc
                if 0 <= r < grid and 0 <= c < grid:
                    out[o_i, k] = c / div_xy
                    out[o_i, k + 1] = r / div_xy
                    u = occ[r, c]
                    if u >= 0:
                        out[o_i, k + 2] = index[u] / div_idx
                        out[o_i, k + 3] = 1.0 if team[u] == team[o] else -1.0
                        out[o_i, k + 4] = health[u] / div_hp
                        out[o_i, k + 5] = cooldown[u]
                k += 6
    return out


def spot_targets(rows, cols, team, health, spotter_team, radius=VIEW):
    """Enemies visible to any living spotter, and each spotter's nearest one.

    Visibility is Chebyshev distance <= radius. Nearest is by Manhattan
    distance, ties to the lowest unit id. Returns (visible, target) where
    ``target[u]`` is -1 for non-spotters or when nothing is visible.
    """
    n = len(rows)
    visible = np.zeros(n, dtype=np.int64)
    target = np.full(n, -1, dtype=np.int64)
    for e in range(n):
        if team[e] == spotter_team or health[e] <= 0:
            continue
        for s in range(n):
            if team[s] == spotter_team and health[s] > 0:
                if max(abs(rows[s] - rows[e]), abs(cols[s] - cols[e])) <= radius:
                    visible[e] = 1
                    break
    for s in range(n):
        if team[s] != spotter_team or health[s] <= 0:
            continue
        best = -1
        for e in range(n):
            if visible[e]:
                d = abs(rows[s] - rows[e]) + abs(cols[s] - cols[e])
                if best < 0 or d < best:
                    best = d
                    target[s] = e
    return visible, target
