"""Rasterize a map around a ground landmark into 28x28 context images."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..gridmap import GridMap, Landmark, center_of_mass

SIZE = 28
CENTER = 14

BACKGROUND = 1.0
GROUND = 0.6
BUILDING = 0.3
STREET = 0.1
OFF_MAP = 0.0

EGO_CTX, CTX, EGO = "EGO_CTX", "CTX", "EGO"
VARIANTS = (EGO_CTX, CTX, EGO)


@dataclass(frozen=True)
class ContextImage:
    pixels: np.ndarray  # indexed [y, x], y growing north
    variant: str
    ground_id: str


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def rasterize(gmap: GridMap, ground_id: str, only_ground: bool = False) -> np.ndarray:
    """Full-map raster indexed [y, x]."""
    img = np.full((gmap.height, gmap.width), BACKGROUND)
    if not only_ground:
        for lm in gmap.landmarks.values():
            if lm.id == ground_id:
                continue
            val = STREET if lm.kind == "street" else BUILDING
            for x, y in lm.cells:
                img[y, x] = val
    for x, y in gmap.landmarks[ground_id].cells:
        img[y, x] = GROUND
    return img


def _crop(raster: np.ndarray, x0: int, y0: int) -> np.ndarray:
    """28x28 window whose pixel (0, 0) is cell (x0, y0); off-map pixels are 0."""
    h, w = raster.shape
    out = np.full((SIZE, SIZE), OFF_MAP)
    xs = slice(max(x0, 0), min(x0 + SIZE, w))
    ys = slice(max(y0, 0), min(y0 + SIZE, h))
    if xs.start < xs.stop and ys.start < ys.stop:
        out[ys.start - y0:ys.stop - y0, xs.start - x0:xs.stop - x0] = raster[ys, xs]
    return out


def render_context(gmap: GridMap, ground_id: str, variant: str = EGO_CTX) -> ContextImage:
    if ground_id not in gmap.landmarks:
        raise KeyError(f"unknown ground {ground_id!r} in map {gmap.name!r}")
    if variant == CTX:
        raster = rasterize(gmap, ground_id)
        x0 = (gmap.width - SIZE) // 2
        y0 = (gmap.height - SIZE) // 2
    elif variant in (EGO_CTX, EGO):
        raster = rasterize(gmap, ground_id, only_ground=(variant == EGO))
        com = center_of_mass(gmap.landmarks[ground_id])
        x0 = _round_half_up(com.x) - CENTER
        y0 = _round_half_up(com.y) - CENTER
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return ContextImage(_crop(raster, x0, y0), variant, ground_id)


def rotate_map(gmap: GridMap, quarter_turns: int) -> GridMap:
    """Rotate the whole map counterclockwise by ``quarter_turns`` * 90 degrees."""
    k = quarter_turns % 4
    w, h = gmap.width, gmap.height
    landmarks = []
    for lm in gmap.landmarks.values():
        cells = lm.cells
        cw, ch = w, h
        for _ in range(k):
            cells = [(ch - 1 - y, x) for x, y in cells]
            cw, ch = ch, cw
        landmarks.append(Landmark.make(lm.id, lm.kind, lm.synonyms, cells))
    nw, nh = (w, h) if k % 2 == 0 else (h, w)
    return GridMap.from_landmarks(gmap.name, nw, nh, landmarks, gmap.cell_size_m)
