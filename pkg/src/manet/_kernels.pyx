# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled environment kernels; semantics match ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef long VIEW = 2


def render_nav(long agent_row, long agent_col, waypoints, long next_waypoint,
               long grid=8, long cell=5):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] img = np.zeros((grid * cell, grid * cell, 3))
    cdef long k, r, c, i, j, nw = len(waypoints)
    cdef double shade
    for k in range(next_waypoint - 1, nw):
        r = waypoints[k][0]
        c = waypoints[k][1]
        shade = (k + 1) / 5.0
        for i in range(r * cell, (r + 1) * cell):
            for j in range(c * cell, (c + 1) * cell):
                img[i, j, 0] = shade
    for i in range(agent_row * cell, (agent_row + 1) * cell):
        for j in range(agent_col * cell, (agent_col + 1) * cell):
            img[i, j, 0] = 0.0
            img[i, j, 1] = 1.0
            img[i, j, 2] = 0.0
    return img


def encode_views(rows_, cols_, team_, index_, health_, cooldown_, observers_,
                 long grid, bint normalize):
    cdef long[:] rows = np.ascontiguousarray(rows_, dtype=np.int64)
    cdef long[:] cols = np.ascontiguousarray(cols_, dtype=np.int64)
    cdef long[:] team = np.ascontiguousarray(team_, dtype=np.int64)
    cdef long[:] index = np.ascontiguousarray(index_, dtype=np.int64)
    cdef long[:] health = np.ascontiguousarray(health_, dtype=np.int64)
    cdef long[:] cooldown = np.ascontiguousarray(cooldown_, dtype=np.int64)
    cdef long[:] observers = np.ascontiguousarray(observers_, dtype=np.int64)
    cdef long n = rows.shape[0], n_obs = observers.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] occ = np.full((grid, grid), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n_obs, 150))
    cdef long u, o, o_i, k, dr, dc, r, c
    cdef double div_xy = (grid - 1) if normalize else 1.0
    cdef double div_idx = 5.0 if normalize else 1.0
    cdef double div_hp = 3.0 if normalize else 1.0
    for u in range(n):
        if health[u] > 0:
            occ[rows[u], cols[u]] = u
    for o_i in range(n_obs):
        o = observers[o_i]
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


def spot_targets(rows_, cols_, team_, health_, long spotter_team, long radius=VIEW):
    cdef long[:] rows = np.ascontiguousarray(rows_, dtype=np.int64)
    cdef long[:] cols = np.ascontiguousarray(cols_, dtype=np.int64)
    cdef long[:] team = np.ascontiguousarray(team_, dtype=np.int64)
    cdef long[:] health = np.ascontiguousarray(health_, dtype=np.int64)
    cdef long n = rows.shape[0], e, s, d, best
    cdef cnp.ndarray[cnp.int64_t, ndim=1] visible = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] target = np.full(n, -1, dtype=np.int64)
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
