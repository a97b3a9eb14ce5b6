"""Spatial-language observation model: tuples + frames of reference -> likelihood field."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gridmap import GridMap, Point, center_of_mass, closest_cell, unit_vector
from .langparse import ABSOLUTE, LEXICON, RELATIVE_FRONT, RELATIVE_LEFT, requires_for

TWO_PI = 2 * math.pi

CARDINAL_ANGLES = {
    "east": 0.0,
    "northeast": math.pi / 4,
    "north": math.pi / 2,
    "northwest": 3 * math.pi / 4,
    "west": math.pi,
    "southwest": 5 * math.pi / 4,
    "south": 3 * math.pi / 2,
    "southeast": 7 * math.pi / 4,
    "above": math.pi / 2,
    "top": math.pi / 2,
    "below": 3 * math.pi / 2,
    "down": 3 * math.pi / 2,
    "under": 3 * math.pi / 2,
}

# the relation whose FoR angle is predicted directly; its antonym is rotated by pi
_PRIMARY = {"front": "front", "behind": "front", "left": "left", "right": "left"}


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class FrameOfReference:
    origin: Point
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


@dataclass(frozen=True)
class SpatialModelConfig:
    sigma_multipliers: dict = field(
        default_factory=lambda: {r: info.sigma_multiplier for r, info in LEXICON.items()})
    dot_mode: str = "rectified"
    mixture_weight: float = 0.9

    def __post_init__(self):
        if self.dot_mode not in ("abs", "rectified"):
            raise ValueError(f"dot_mode must be 'abs' or 'rectified', got {self.dot_mode!r}")
        if not 0.0 <= self.mixture_weight <= 1.0:
            raise ValueError(f"mixture_weight must be in [0, 1], got {self.mixture_weight}")
        for r, m in self.sigma_multipliers.items():
            if not m > 0:
                raise ValueError(f"sigma multiplier for {r!r} must be positive")

    def sigma(self, relation, landmark) -> float:
        mult = self.sigma_multipliers.get(relation, 1.0)
        return mult * (1.0 + math.sqrt(len(landmark.cells)))


@dataclass(frozen=True)
class RelationWeightTrace:
    u: tuple | None
    v: tuple | None
    dist: float
    gaussian: float
    dot_factor: float

    @property
    def weight(self) -> float:
        return self.dot_factor * self.gaussian


def absolute_for(relation: str, ground, gmap: GridMap) -> FrameOfReference:
    if relation not in CARDINAL_ANGLES or requires_for(relation)[1] != ABSOLUTE:
        raise ContractError(f"{relation!r} has no absolute frame of reference")
    lm = gmap.landmarks[ground] if isinstance(ground, str) else ground
    return FrameOfReference(center_of_mass(lm), CARDINAL_ANGLES[relation])


def relation_direction(relation: str, frame: FrameOfReference | None = None) -> tuple:
    needs, kind = requires_for(relation)
    if not needs:
        raise ContractError(f"{relation!r} does not use a frame of reference")
    if kind == ABSOLUTE:
        # absolute relations carry their own angle in the frame; fall back to the table
        theta = frame.theta if frame is not None else CARDINAL_ANGLES[relation]
    else:
        if frame is None:
            raise ContractError(f"{relation!r} needs a predicted frame of reference")
        theta = frame.theta
        if relation in ("behind", "right"):
            theta += math.pi
    return (math.cos(theta), math.sin(theta))


def relation_likelihood(tup, frame, cell, gmap: GridMap, config: SpatialModelConfig):
    """Weight of ``cell`` under one spatial relation, with a trace of the factors."""
    ground = gmap.landmarks[tup.ground]
    sigma = config.sigma(tup.relation, ground)
    c = (float(cell[0]), float(cell[1]))
    near, dist = closest_cell(c, ground)
    gaussian = math.exp(-dist * dist / (2 * sigma * sigma))
    needs, _ = requires_for(tup.relation)
    if not needs:
        return gaussian, RelationWeightTrace(None, None, dist, gaussian, 1.0)
    v = relation_direction(tup.relation, frame)
    if config.dot_mode == "abs":
        u = unit_vector(c, near)
    else:
        u = unit_vector(center_of_mass(ground), c)
    if dist == 0 or u is None:
        d = 1.0
    else:
        dot = u[0] * v[0] + u[1] * v[1]
        d = abs(dot) if config.dot_mode == "abs" else max(0.0, dot)
    return d * gaussian, RelationWeightTrace(u, v, dist, gaussian, d)


def _closest_cells(coords: np.ndarray, ground) -> tuple[np.ndarray, np.ndarray]:
    """Closest ground cell (lexicographic tie-break) and distance for every query cell."""
    gc = ground.cell_array  # already sorted lexicographically
    diff = gc[None, :, :] - coords[:, None, :]
    d = np.sqrt((diff ** 2).sum(axis=2))
    arg = d.argmin(axis=1)  # first minimum = lexicographically smallest cell
    return gc[arg], d[np.arange(len(coords)), arg]


def relation_weights(tup, frame, gmap: GridMap, config: SpatialModelConfig) -> np.ndarray:
    """Vectorized relation_likelihood over every cell (index = y * width + x)."""
    ground = gmap.landmarks[tup.ground]
    coords = gmap.cell_coords().astype(float)
    sigma = config.sigma(tup.relation, ground)
    near, dist = _closest_cells(coords, ground)
    w = np.exp(-dist ** 2 / (2 * sigma ** 2))
    needs, _ = requires_for(tup.relation)
    if not needs:
        return w
    vx, vy = relation_direction(tup.relation, frame)
    if config.dot_mode == "abs":
        u = near - coords
    else:
        com = center_of_mass(ground)
        u = coords - np.array([com.x, com.y])
    norm = np.hypot(u[:, 0], u[:, 1])
    ok = (norm >= 1e-9) & (dist != 0)
    dot = np.ones_like(w)
    dot[ok] = (u[ok, 0] * vx + u[ok, 1] * vy) / norm[ok]
    if config.dot_mode == "abs":
        dot[ok] = np.abs(dot[ok])
    else:
        dot[ok] = np.maximum(0.0, dot[ok])
    return w * dot


ForProvider = Callable[[str, str], "FrameOfReference | None"]


def default_for_provider(gmap: GridMap, relative: dict | None = None) -> ForProvider:
    """Absolute frames from the cardinal table; relative ones looked up in ``relative``.

    ``relative`` maps (primary relation, ground id) -> FrameOfReference, where the
    primary relation is 'front' or 'left'.
    """
    relative = relative or {}

    def provide(relation, ground):
        needs, kind = requires_for(relation)
        if not needs:
            return None
        if kind == ABSOLUTE:
            return absolute_for(relation, ground, gmap)
        key = (_PRIMARY[relation], ground)
        if key not in relative:
            raise ContractError(f"no frame of reference available for {relation!r} at {ground!r}")
        return relative[key]

    return provide


def raw_field(tuples, gmap: GridMap, for_provider: ForProvider, config: SpatialModelConfig):
    raw = np.ones(gmap.n_cells)
    for t in tuples:
        raw *= relation_weights(t, for_provider(t.relation, t.ground), gmap, config)
    return raw


def language_likelihood_field(tuples, gmap: GridMap, for_provider: ForProvider,
                              config: SpatialModelConfig | None = None) -> np.ndarray:
    """Normalized per-cell field for one figure, mixed with uniform by the mixture weight.

    Returned as a flat array of length width*height with index y * width + x.
    """
    config = config or SpatialModelConfig()
    tuples = list(tuples)
    if len({t.figure for t in tuples}) > 1:
        raise ContractError("all tuples must share one figure")
    n = gmap.n_cells
    raw = raw_field(tuples, gmap, for_provider, config)
    total = raw.sum()
    if total < 1e-12:
        return np.full(n, 1.0 / n)
    lam = config.mixture_weight
    return lam * raw / total + (1.0 - lam) / n


def relative_kind(relation: str) -> str | None:
    kind = requires_for(relation)[1]
    return kind if kind in (RELATIVE_FRONT, RELATIVE_LEFT) else None
