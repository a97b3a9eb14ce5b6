"""POMCP-style online planning with root states sampled from histogram beliefs.

The search itself runs in a numba kernel over flat arrays. Transition, sensing
and reward inside the kernel mirror ``mos_pomdp`` exactly; the test suite
cross-checks the two.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from numba import types
from numba.typed import Dict

from . import mos_pomdp as mp
from .gridmap import GridMap

N_MOTIONS = 3
_KEY = types.UniTuple(types.int64, 3)
_PI = math.pi
_TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class PlannerConfig:
    simulations: int = 1000
    discount: float = 0.95
    exploration: float = 1000.0
    max_depth: int = 60
    seed: int = 0
    prune: bool = True

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        if not self.exploration > 0:
            raise ValueError("exploration constant must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class MosModel:
    gmap: GridMap
    sensor: mp.SensorConfig
    targets: tuple

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(sorted(self.targets)))

    @property
    def actions(self) -> list:
        return mp.action_order(self.targets)


# -- kernel ----------------------------------------------------------------

@nb.njit(cache=True)
def _rand(state):
    # xorshift64*
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return float((x * np.uint64(2685821657736338717)) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def _in_fov(rx, ry, heading, cx, cy, depth, half_angle):
    dx = cx - rx
    dy = cy - ry
    if dx == 0 and dy == 0:
        return False
    if dx * dx + dy * dy > depth * depth:
        return False
    off = math.atan2(dy, dx) - heading * (_PI / 4)
    off = (off + _PI) % _TWO_PI - _PI
    return abs(off) <= half_angle + 1e-9


@nb.njit(cache=True)
def _forward(rx, ry, heading, width, height, cos_t, sin_t):
    x, y = rx, ry
    c = cos_t[heading]
    s = sin_t[heading]
    for k in range(1, 4):
        nx = int(math.floor(rx + k * c + 0.5))
        ny = int(math.floor(ry + k * s + 0.5))
        if nx < 0 or nx >= width or ny < 0 or ny >= height:
            break
        x, y = nx, ny
    return x, y


@nb.njit(cache=True)
def _step(pose, tx, ty, found, seen, a, width, height, depth, half_angle, eps, cos_t, sin_t, rng):
    """Advance the simulated state in place; returns (reward, observation code).

    ``seen[i]`` is set when the observation reports target i.
    """
    n = tx.shape[0]
    if a == 0:
        pose[0], pose[1] = _forward(pose[0], pose[1], pose[2], width, height, cos_t, sin_t)
        r = -10.0
    elif a == 1:
        pose[2] = (pose[2] + 1) % 8
        r = -10.0
    elif a == 2:
        pose[2] = (pose[2] + 7) % 8
        r = -10.0
    else:
        i = a - N_MOTIONS
        if found[i] == 0 and _in_fov(pose[0], pose[1], pose[2], tx[i], ty[i], depth, half_angle):
            found[i] = 1
            r = 1000.0
        else:
            r = -1000.0
    ncells = width * height
    code = 0
    base = 1
    for i in range(n):
        d = 0
        if found[i] == 0 and _in_fov(pose[0], pose[1], pose[2], tx[i], ty[i], depth, half_angle):
            if _rand(rng) >= eps:
                d = 1 + ty[i] * width + tx[i]
        seen[i] = 1 if d > 0 else 0
        code += d * base
        base *= ncells + 1
    for i in range(n):
        code += found[i] * base
        base *= 2
    return r, code


@nb.njit(cache=True)
def _legal(pose, found, seen, prune, width, height, cos_t, sin_t, out):
    """Legal action indices in fixed order; returns how many were written.

    With pruning, Forward must move the robot and Detect(i) needs a current
    sighting of target i; both excluded cases are dominated by a rotation.
    """
    k = 0
    if prune:
        x, y = _forward(pose[0], pose[1], pose[2], width, height, cos_t, sin_t)
        if x != pose[0] or y != pose[1]:
            out[k] = 0
            k += 1
        out[k] = 1
        out[k + 1] = 2
        k += 2
    else:
        for a in range(N_MOTIONS):
            out[k] = a
            k += 1
    for i in range(found.shape[0]):
        if found[i] == 0 and (seen[i] == 1 or not prune):
            out[k] = N_MOTIONS + i
            k += 1
    return k


@nb.njit(cache=True)
def _all_found(found):
    for i in range(found.shape[0]):
        if found[i] == 0:
            return False
    return True


@nb.njit(cache=True)
def _rollout(pose, tx, ty, found, seen, depth_left, width, height, depth, half_angle, eps,
             gamma, prune, cos_t, sin_t, rng, legal):
    total = 0.0
    disc = 1.0
    for _ in range(depth_left):
        if _all_found(found):
            break
        k = _legal(pose, found, seen, prune, width, height, cos_t, sin_t, legal)
        a = legal[min(int(_rand(rng) * k), k - 1)]
        r, _ = _step(pose, tx, ty, found, seen, a, width, height, depth, half_angle, eps,
                     cos_t, sin_t, rng)
        total += disc * r
        disc *= gamma
    return total


@nb.njit(cache=True)
def _search(cum, unfound_mask, root_seen, root_pose, width, height, depth, half_angle, eps,
            sims, gamma, c, max_depth, prune, cos_t, sin_t, seed):
    n = cum.shape[0]
    n_actions = N_MOTIONS + n
    cap = sims + 2
    vn = np.zeros(cap, dtype=np.int64)
    qn = np.zeros((cap, n_actions), dtype=np.int64)
    qv = np.zeros((cap, n_actions))
    children = Dict.empty(key_type=_KEY, value_type=types.int64)
    n_nodes = 1
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = np.uint64(seed) | np.uint64(1)
    ncells = width * height
    tx = np.zeros(n, dtype=np.int64)
    ty = np.zeros(n, dtype=np.int64)
    found = np.zeros(n, dtype=np.int64)
    seen = np.zeros(n, dtype=np.int64)
    pose = np.zeros(3, dtype=np.int64)
    legal = np.zeros(n_actions, dtype=np.int64)
    path_v = np.zeros(max_depth + 1, dtype=np.int64)
    path_a = np.zeros(max_depth + 1, dtype=np.int64)
    path_r = np.zeros(max_depth + 1)
    for _ in range(sims):
        for i in range(n):
            found[i] = 0 if unfound_mask[i] else 1
            seen[i] = root_seen[i]
            if unfound_mask[i]:
                u = _rand(rng) * cum[i, ncells - 1]
                idx = np.searchsorted(cum[i], u, side="right")
                if idx >= ncells:
                    idx = ncells - 1
                tx[i] = idx % width
                ty[i] = idx // width
        pose[0] = root_pose[0]
        pose[1] = root_pose[1]
        pose[2] = root_pose[2]
        node = 0
        d = 0
        tail = 0.0
        while d < max_depth and not _all_found(found):
            k = _legal(pose, found, seen, prune, width, height, cos_t, sin_t, legal)
            best_a = -1
            best = -np.inf
            for j in range(k):
                a = legal[j]
                if qn[node, a] == 0:
                    best_a = a
                    break
                score = qv[node, a] + c * math.sqrt(math.log(vn[node]) / qn[node, a])
                if score > best:
                    best = score
                    best_a = a
            r, code = _step(pose, tx, ty, found, seen, best_a, width, height, depth, half_angle,
                            eps, cos_t, sin_t, rng)
            path_v[d] = node
            path_a[d] = best_a
            path_r[d] = r
            d += 1
            key = (node, best_a, code)
            if key in children:
                node = children[key]
            else:
                if n_nodes < cap:
                    children[key] = n_nodes
                    n_nodes += 1
                tail = _rollout(pose, tx, ty, found, seen, max_depth - d, width, height, depth,
                                half_angle, eps, gamma, prune, cos_t, sin_t, rng, legal)
                break
        g = tail
        for j in range(d - 1, -1, -1):
            g = path_r[j] + gamma * g
            v = path_v[j]
            a = path_a[j]
            vn[v] += 1
            qn[v, a] += 1
            qv[v, a] += (g - qv[v, a]) / qn[v, a]
    return qv[0].copy(), qn[0].copy()


# -- python surface ----------------------------------------------------------

def _seed_from(rng) -> int:
    return int(rng.integers(1, 2 ** 62))


def plan(belief: mp.Belief, model: MosModel, config: PlannerConfig | None = None, rng=None):
    """Choose an action for ``belief``; returns (action, info).

    info has the root Q values and visit counts keyed by action name.
    """
    config = config or PlannerConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    targets = list(model.targets)
    unfound = np.array([t not in belief.found for t in targets], dtype=np.bool_)
    g = model.gmap
    cum = np.zeros((len(targets), g.n_cells))
    for i, t in enumerate(targets):
        if unfound[i]:
            h = belief.hist[t]
            if not h.sum() > 0:
                raise ValueError(f"empty belief support for target {t!r}")
            cum[i] = np.cumsum(h)
    pose = np.array([belief.robot.x, belief.robot.y, belief.robot.heading], dtype=np.int64)
    mask = mp.fov_mask(belief.robot, model.sensor, g)
    seen = np.array([bool(unfound[i]) and belief.hist[t][mask].sum() > 0
                     for i, t in enumerate(targets)], dtype=np.int64)
    q, counts = _search(cum, unfound, seen, pose, g.width, g.height, model.sensor.depth,
                        model.sensor.fov_half_angle, model.sensor.epsilon,
                        config.simulations, config.discount, config.exploration,
                        config.max_depth, config.prune, mp.COS, mp.SIN, _seed_from(rng))
    actions = model.actions
    best, best_q = None, -math.inf
    for a_idx, act in enumerate(actions):
        if counts[a_idx] > 0 and q[a_idx] > best_q:
            best, best_q = act, q[a_idx]
    if best is None:
        raise ValueError("no legal action")
    info = {
        "root_q": {str(a): float(q[i]) for i, a in enumerate(actions) if counts[i] > 0},
        "visits": {str(a): int(counts[i]) for i, a in enumerate(actions) if counts[i] > 0},
        "sims": config.simulations,
    }
    return best, info


def kernel_step(state: mp.MosState, action: mp.Action, model: MosModel, rng_seed: int = 1):
    """Run one kernel transition on a Python state (used to cross-check the kernel)."""
    targets = list(model.targets)
    tx = np.array([state.targets[t][0] for t in targets], dtype=np.int64)
    ty = np.array([state.targets[t][1] for t in targets], dtype=np.int64)
    found = np.array([t in state.found for t in targets], dtype=np.int64)
    pose = np.array([state.robot.x, state.robot.y, state.robot.heading], dtype=np.int64)
    a = model.actions.index(action)
    rng = np.array([rng_seed | 1], dtype=np.uint64)
    seen = np.zeros(len(targets), dtype=np.int64)
    r, code = _step(pose, tx, ty, found, seen, a, model.gmap.width, model.gmap.height,
                    model.sensor.depth, model.sensor.fov_half_angle, model.sensor.epsilon,
                    mp.COS, mp.SIN, rng)
    nxt = mp.MosState(state.targets, mp.RobotPose(int(pose[0]), int(pose[1]), int(pose[2])),
                      frozenset(t for t, f in zip(targets, found) if f))
    return nxt, r, code


def step_and_replan(belief: mp.Belief, model: MosModel, config: PlannerConfig,
                    env: mp.Environment, rng):
    """Plan, act in ``env``, observe and filter. No tree is kept between steps."""
    action, info = plan(belief, model, config, rng)
    obs, r = env.step(action)
    nxt = mp.belief_update(belief, action, obs, model.sensor, model.gmap, found=env.state.found)
    return action, obs, r, nxt, info


@dataclass
class Episode:
    actions: list
    rewards: list
    success: bool
    steps: int
    discounted_reward: float


def run_episode(belief: mp.Belief, model: MosModel, config: PlannerConfig, env: mp.Environment,
                rng, max_steps: int = 200, discount: float = 0.95, diagnostics=None) -> Episode:
    actions, rewards = [], []
    total, disc = 0.0, 1.0
    step = 0
    while step < max_steps and not env.done:
        action, _, r, belief, info = step_and_replan(belief, model, config, env, rng)
        if diagnostics is not None:
            diagnostics.write(json.dumps({"step": step, "action": str(action),
                                          "root_q": info["root_q"], "sims": info["sims"]}) + "\n")
        actions.append(action)
        rewards.append(r)
        total += disc * r
        disc *= discount
        step += 1
    return Episode(actions, rewards, env.done, step, total)
