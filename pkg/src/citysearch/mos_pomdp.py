"""Multi-object search POMDP: poses, actions, fan sensor, rewards and histogram beliefs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gridmap import GridMap

N_HEADINGS = 8
HEADING_STEP = math.pi / 4
# shared with the planner kernel so both agree bit-for-bit
COS = np.array([math.cos(i * HEADING_STEP) for i in range(N_HEADINGS)])
SIN = np.array([math.sin(i * HEADING_STEP) for i in range(N_HEADINGS)])
FOV_SLACK = 1e-9
FORWARD_CELLS = 3

STEP_COST = -10
DETECT_REWARD = 1000
WRONG_DETECT = -1000

FORWARD, ROTATE_LEFT, ROTATE_RIGHT, DETECT = "Forward", "RotateLeft", "RotateRight", "Detect"
MOTIONS = (FORWARD, ROTATE_LEFT, ROTATE_RIGHT)


@dataclass(frozen=True)
class RobotPose:
    x: int
    y: int
    heading: int = 0  # index into multiples of 45 degrees, counterclockwise from east

    def __post_init__(self):
        object.__setattr__(self, "heading", int(self.heading) % N_HEADINGS)

    @property
    def angle(self) -> float:
        return self.heading * HEADING_STEP


@dataclass(frozen=True)
class Action:
    kind: str
    target: str | None = None

    def __post_init__(self):
        if self.kind == DETECT and not self.target:
            raise ValueError("Detect needs a target id")
        if self.kind not in MOTIONS + (DETECT,):
            raise ValueError(f"unknown action {self.kind!r}")

    @property
    def is_motion(self) -> bool:
        return self.kind != DETECT

    def __str__(self):
        return f"Detect({self.target})" if self.kind == DETECT else self.kind


def action_order(targets) -> list:
    """The fixed action order used for tie-breaks: motions first, then Detect per target."""
    return [Action(k) for k in MOTIONS] + [Action(DETECT, t) for t in sorted(targets)]


@dataclass(frozen=True)
class SensorConfig:
    depth: int = 3
    fov_half_angle: float = math.pi / 8
    epsilon: float = 0.0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"sensor depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.epsilon < 1.0 and self.epsilon != 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class MosState:
    targets: dict            # id -> (x, y)
    robot: RobotPose
    found: frozenset = frozenset()


@dataclass(frozen=True)
class SensorObservation:
    detections: tuple        # sorted ((target id, (x, y) or None), ...)

    @classmethod
    def of(cls, mapping: dict) -> "SensorObservation":
        return cls(tuple(sorted(mapping.items())))

    def as_dict(self) -> dict:
        return dict(self.detections)


def in_fov(pose: RobotPose, cell, sensor: SensorConfig) -> bool:
    dx, dy = cell[0] - pose.x, cell[1] - pose.y
    if dx == 0 and dy == 0:
        return False
    if dx * dx + dy * dy > sensor.depth * sensor.depth:
        return False
    off = math.atan2(dy, dx) - pose.angle
    off = (off + math.pi) % (2 * math.pi) - math.pi
    return abs(off) <= sensor.fov_half_angle + FOV_SLACK


def cells_in_fov(pose: RobotPose, sensor: SensorConfig, gmap: GridMap) -> set:
    d = sensor.depth
    out = set()
    for x in range(max(pose.x - d, 0), min(pose.x + d + 1, gmap.width)):
        for y in range(max(pose.y - d, 0), min(pose.y + d + 1, gmap.height)):
            if in_fov(pose, (x, y), sensor):
                out.add((x, y))
    return out


def fov_mask(pose: RobotPose, sensor: SensorConfig, gmap: GridMap) -> np.ndarray:
    mask = np.zeros(gmap.n_cells, dtype=bool)
    for x, y in cells_in_fov(pose, sensor, gmap):
        mask[y * gmap.width + x] = True
    return mask


def move_robot(pose: RobotPose, action: Action, gmap: GridMap) -> RobotPose:
    if action.kind == ROTATE_LEFT:
        return replace(pose, heading=pose.heading + 1)
    if action.kind == ROTATE_RIGHT:
        return replace(pose, heading=pose.heading - 1)
    if action.kind == FORWARD:
        x, y = pose.x, pose.y
        c, s = COS[pose.heading], SIN[pose.heading]
        for k in range(1, FORWARD_CELLS + 1):
            nx = int(math.floor(pose.x + k * c + 0.5))
            ny = int(math.floor(pose.y + k * s + 0.5))
            if not gmap.in_bounds(nx, ny):
                break
            x, y = nx, ny
        return RobotPose(x, y, pose.heading)
    return pose


def transition(state: MosState, action: Action, gmap: GridMap, sensor: SensorConfig) -> MosState:
    robot = move_robot(state.robot, action, gmap)
    found = state.found
    if action.kind == DETECT:
        t = action.target
        if t not in found and in_fov(robot, state.targets[t], sensor):
            found = found | {t}
    return MosState(state.targets, robot, found)


def reward(state: MosState, action: Action, next_state: MosState) -> int:
    if action.is_motion:
        return STEP_COST
    newly = action.target in next_state.found and action.target not in state.found
    return DETECT_REWARD if newly else WRONG_DETECT


def sensor_observation(state: MosState, sensor: SensorConfig, rng) -> SensorObservation:
    out = {}
    for t in sorted(state.targets):
        if t in state.found:
            continue
        cell = tuple(state.targets[t])
        hit = None
        if in_fov(state.robot, cell, sensor):
            if rng.random() >= sensor.epsilon:
                hit = cell
        out[t] = hit
    return SensorObservation.of(out)


@dataclass
class Belief:
    hist: dict               # id -> flat histogram (index y * width + x)
    robot: RobotPose
    found: frozenset = frozenset()

    @property
    def targets(self) -> list:
        return sorted(self.hist)

    def unfound(self) -> list:
        return [t for t in self.targets if t not in self.found]

    def grid(self, target, gmap: GridMap) -> np.ndarray:
        """Histogram of one target as a [y, x] array."""
        return self.hist[target].reshape(gmap.height, gmap.width)

    def copy(self) -> "Belief":
        return Belief({k: v.copy() for k, v in self.hist.items()}, self.robot, self.found)


def belief_update(belief: Belief, action: Action, observation: SensorObservation,
                  sensor: SensorConfig, gmap: GridMap, found=None) -> Belief:
    """Exact Bayes update of every unfound target's histogram.

    ``found`` is the found set reported by the environment after the action
    (the robot's own state is fully observed); it defaults to the prior found set.
    """
    robot = move_robot(belief.robot, action, gmap)
    found = frozenset(belief.found if found is None else found)
    obs = observation.as_dict()
    mask = fov_mask(robot, sensor, gmap)
    hist = {}
    for t, h in belief.hist.items():
        if t in found:
            hist[t] = h.copy()
            continue
        cell = obs.get(t)
        if cell is not None:
            new = np.zeros_like(h)
            new[gmap.index(*cell)] = 1.0
        else:
            new = h.copy()
            new[mask] *= sensor.epsilon
            total = new.sum()
            if total < 1e-12:
                new = np.full_like(h, 1.0 / h.size)
            else:
                new /= total
        hist[t] = new
    return Belief(hist, robot, found)


# -- priors -----------------------------------------------------------------

def prior_uniform(gmap: GridMap) -> np.ndarray:
    return np.full(gmap.n_cells, 1.0 / gmap.n_cells)


def prior_informed(gmap: GridMap, cell, sigma: float = 1.0) -> np.ndarray:
    xy = gmap.cell_coords()
    d2 = ((xy - np.asarray(cell)) ** 2).sum(axis=1)
    p = np.exp(-d2 / (2 * sigma * sigma))
    return p / p.sum()


def prior_keyword(gmap: GridMap, ground_ids, dilation: int = 2, mass: float = 0.9) -> np.ndarray:
    """``mass`` spread uniformly over the referenced landmarks (dilated), the rest elsewhere."""
    region = np.zeros((gmap.width, gmap.height), dtype=bool)
    for gid in ground_ids:
        for x, y in gmap.landmarks[gid].cells:
            region[max(x - dilation, 0):x + dilation + 1, max(y - dilation, 0):y + dilation + 1] = True
    flat = region.T.ravel()  # to y * width + x order
    n_in = int(flat.sum())
    if n_in == 0:
        return prior_uniform(gmap)
    n_out = flat.size - n_in
    if n_out == 0:
        return np.full(flat.size, 1.0 / flat.size)
    return np.where(flat, mass / n_in, (1.0 - mass) / n_out)


PRIOR_MODES = ("slu", "keyword", "uniform", "informed")


def init_belief(mode: str, gmap: GridMap, targets, robot: RobotPose, *, fields=None,
                true_cells=None, grounds=None, found=frozenset()) -> Belief:
    """Initial belief per baseline.

    fields: id -> language field (slu); true_cells: id -> cell (informed);
    grounds: id -> referenced landmark ids (keyword).
    """
    hist = {}
    for t in targets:
        if mode == "uniform":
            h = prior_uniform(gmap)
        elif mode == "informed":
            h = prior_informed(gmap, true_cells[t])
        elif mode == "keyword":
            h = prior_keyword(gmap, (grounds or {}).get(t, ()))
        elif mode == "slu":
            h = np.asarray(fields[t], dtype=float)
            h = h / h.sum()
        else:
            raise ValueError(f"unknown prior mode {mode!r}")
        hist[t] = h
    return Belief(hist, robot, frozenset(found))


@dataclass
class Environment:
    """The true world the robot acts in."""
    gmap: GridMap
    sensor: SensorConfig
    state: MosState
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def step(self, action: Action):
        nxt = transition(self.state, action, self.gmap, self.sensor)
        r = reward(self.state, action, nxt)
        self.state = nxt
        return sensor_observation(nxt, self.sensor, self.rng), r

    @property
    def done(self) -> bool:
        return self.state.found >= set(self.state.targets)
