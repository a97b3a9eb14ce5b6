"""Grid city maps: landmarks, geometry helpers and JSON I/O.

Axis convention used everywhere in the package: +x is east, +y is north,
angles are counterclockwise from +x. Distances are in cell units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

KINDS = ("building", "street")


class MapError(ValueError):
    """Raised when a map file or map construction is invalid."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise MapError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def __getitem__(self, i):
        return (self.x, self.y)[i]


@dataclass(frozen=True)
class Landmark:
    id: str
    kind: str
    synonyms: tuple[str, ...]
    cells: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MapError(f"landmark {self.id!r}: unknown kind {self.kind!r}")
        if not self.cells:
            raise MapError(f"landmark {self.id!r}: no cells")
        if len(set(self.cells)) != len(self.cells):
            raise MapError(f"landmark {self.id!r}: duplicate cells")
        for s in self.synonyms:
            if s != s.lower():
                raise MapError(f"landmark {self.id!r}: synonym {s!r} is not lowercase")

    @classmethod
    def make(cls, id: str, kind: str, synonyms: Iterable[str], cells: Iterable) -> "Landmark":
        cells = tuple(sorted((int(x), int(y)) for x, y in cells))
        return cls(id, kind, tuple(synonyms), cells)

    @property
    def cell_array(self) -> np.ndarray:
        return np.array(self.cells, dtype=float)


@dataclass(frozen=True)
class GridMap:
    name: str
    width: int = 41
    height: int = 41
    cell_size_m: float = 5.0
    landmarks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise MapError(f"map {self.name!r}: bad size {self.width}x{self.height}")
        for lid, lm in self.landmarks.items():
            if lid != lm.id:
                raise MapError(f"landmark key {lid!r} does not match id {lm.id!r}")
            for x, y in lm.cells:
                if not (0 <= x < self.width and 0 <= y < self.height):
                    raise MapError(f"landmark {lid!r}: cell ({x}, {y}) out of bounds "
                                   f"for {self.width}x{self.height} map")

    @classmethod
    def from_landmarks(cls, name, width, height, landmarks, cell_size_m=5.0) -> "GridMap":
        table = {}
        for lm in landmarks:
            if lm.id in table:
                raise MapError(f"duplicate landmark id {lm.id!r}")
            table[lm.id] = lm
        return cls(name, width, height, cell_size_m, table)

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def in_bounds(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def buildings(self) -> list:
        return [lm for lm in self.landmarks.values() if lm.kind == "building"]

    def streets(self) -> list:
        return [lm for lm in self.landmarks.values() if lm.kind == "street"]

    def cell_coords(self) -> np.ndarray:
        """All cells as an (n_cells, 2) array, row-major with index = y * width + x."""
        ys, xs = np.divmod(np.arange(self.n_cells), self.width)
        return np.stack([xs, ys], axis=1)

    def index(self, x, y) -> int:
        return int(y) * self.width + int(x)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "cell_size_m": self.cell_size_m,
            "landmarks": [
                {"id": lm.id, "kind": lm.kind, "synonyms": list(lm.synonyms),
                 "cells": [list(c) for c in lm.cells]}
                for lm in self.landmarks.values()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def map_from_dict(data: dict) -> GridMap:
    try:
        name = str(data["name"])
        width, height = int(data["width"]), int(data["height"])
        cell_size = float(data.get("cell_size_m", 5.0))
        raw = data["landmarks"]
    except (KeyError, TypeError, ValueError) as e:
        raise MapError(f"malformed map: {e}") from e
    landmarks = []
    for entry in raw:
        lid = entry.get("id")
        try:
            cells = [(int(c[0]), int(c[1])) for c in entry["cells"]]
            lm = Landmark.make(str(lid), entry["kind"], entry.get("synonyms", []), cells)
        except (KeyError, TypeError, ValueError, IndexError) as e:
            if isinstance(e, MapError):
                raise
            raise MapError(f"landmark {lid!r}: malformed entry ({e})") from e
        landmarks.append(lm)
    return GridMap.from_landmarks(name, width, height, landmarks, cell_size)


def load_map(path) -> GridMap:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise MapError(f"{path}: not valid JSON ({e})") from e
    return map_from_dict(data)


def save_map(gmap: GridMap, path) -> None:
    Path(path).write_text(gmap.to_json(), encoding="utf-8")


def center_of_mass(landmark: Landmark) -> Point:
    xs, ys = zip(*landmark.cells)
    return Point(sum(xs) / len(xs), sum(ys) / len(ys))


def closest_cell(p, landmark: Landmark):
    """Landmark cell nearest to ``p`` and its distance; ties go to the smaller (x, y)."""
    px, py = p
    best, best_d = None, math.inf
    for c in sorted(landmark.cells):
        d = math.hypot(c[0] - px, c[1] - py)
        if d < best_d:
            best, best_d = c, d
    return best, best_d


def unit_vector(frm, to):
    dx, dy = to[0] - frm[0], to[1] - frm[1]
    n = math.hypot(dx, dy)
    if n < 1e-9:
        return None
    return (dx / n, dy / n)
