"""Pure-Python fixed-step integrator for the two-ball drop.

Layout of ``params`` (float64, length 9):
    dt, gravity, radius, restitution, bounce_threshold, drag_factor,
    surface_half_extent, settle_speed, (unused)
Each recorded state row is ``[x, y, z, vx, vy, vz]``.
"""
import math

import numpy as np


def resolve_pair(p1, v1, p2, v2, radius):
    """Equal-mass elastic contact. Returns (p1, v1, p2, v2, impacted)."""
    p1 = [float(c) for c in p1]
    v1 = [float(c) for c in v1]
    p2 = [float(c) for c in p2]
    v2 = [float(c) for c in v2]
    impacted = _resolve(p1, v1, p2, v2, radius)[0]
    return p1, v1, p2, v2, impacted


def _resolve(p1, v1, p2, v2, radius):
    dx = p2[0] - p1[0]
    dy = p2[1] - p1[1]
    dz = p2[2] - p1[2]
    d2 = dx * dx + dy * dy + dz * dz
    reach = 2.0 * radius
    if d2 >= reach * reach:
        return False, False
    dist = math.sqrt(d2)
    if dist > 0.0:
        nx, ny, nz = dx / dist, dy / dist, dz / dist
    else:
        nx, ny, nz = 0.0, 0.0, 1.0
    rel = (v2[0] - v1[0]) * nx + (v2[1] - v1[1]) * ny + (v2[2] - v1[2]) * nz
    impacted = False
    if rel < 0.0:
        v1[0] += rel * nx
        v1[1] += rel * ny
        v1[2] += rel * nz
        v2[0] -= rel * nx
        v2[1] -= rel * ny
        v2[2] -= rel * nz
        impacted = True
    push = 0.5 * (reach - dist)
    p1[0] -= push * nx
    p1[1] -= push * ny
    p1[2] -= push * nz
    p2[0] += push * nx
    p2[1] += push * ny
    p2[2] += push * nz
    return impacted, True


def simulate_two_balls(pos0, vel0, drop_steps, params, settle_steps, wind_ball,
                       wind_acc, wind_steps, max_steps):
    dt, g, r, e, v_bounce, drag, half, v_settle = (float(v) for v in params[:8])
    p = [[float(c) for c in row] for row in pos0]
    v = [[float(c) for c in row] for row in vel0]
    drop = (int(drop_steps[0]), int(drop_steps[1]))
    wax, way = float(wind_acc[0]), float(wind_acc[1])
    w_lo, w_hi = int(wind_steps[0]), int(wind_steps[1])
    wall = half - r
    settle2 = v_settle * v_settle

    states = np.empty((max_steps + 1, 2, 6))
    for i in range(2):
        states[0, i, :3] = p[i]
        states[0, i, 3:] = v[i]
    rebounds = [0, 0]
    collided = False
    n_impacts = 0
    slow = 0
    settle_step = -1
    last = max_steps
    released = max(drop)

    for k in range(1, max_steps + 1):
        prev = k - 1
        for i in range(2):
            pi, vi = p[i], v[i]
            if prev < drop[i]:
                pi[0] += vi[0] * dt
                pi[1] += vi[1] * dt
                continue
            vi[2] -= g * dt
            if i == wind_ball and w_lo <= prev < w_hi:
                vi[0] += wax * dt
                vi[1] += way * dt
            pi[0] += vi[0] * dt
            pi[1] += vi[1] * dt
            pi[2] += vi[2] * dt
            if pi[2] < r:
                if vi[2] < 0.0:
                    if -vi[2] > v_bounce:
                        vi[2] = -e * vi[2]
                        rebounds[i] += 1
                    else:
                        vi[2] = 0.0
                pi[2] = r
            if pi[2] <= r:
                vi[0] *= drag
                vi[1] *= drag
            for ax in (0, 1):
                if pi[ax] > wall:
                    pi[ax] = wall
                    vi[ax] = -abs(vi[ax])
                elif pi[ax] < -wall:
                    pi[ax] = -wall
                    vi[ax] = abs(vi[ax])
        impacted, touching = _resolve(p[0], v[0], p[1], v[1], r)
        if touching:
            for i in range(2):
                if p[i][2] < r:
                    p[i][2] = r
        if impacted:
            collided = True
            n_impacts += 1
        for i in range(2):
            states[k, i, :3] = p[i]
            states[k, i, 3:] = v[i]
        if prev >= released:
            s0 = v[0][0] * v[0][0] + v[0][1] * v[0][1] + v[0][2] * v[0][2]
            s1 = v[1][0] * v[1][0] + v[1][1] * v[1][1] + v[1][2] * v[1][2]
            if s0 < settle2 and s1 < settle2:
                slow += 1
                if slow >= settle_steps:
                    settle_step = k
                    last = k
                    break
            else:
                slow = 0
    return (states[:last + 1].copy(), np.array(rebounds, dtype=np.int64), collided,
            settle_step, n_impacts)
