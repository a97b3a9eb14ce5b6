"""Seeded synthetic cities and canonical spatial descriptions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gridmap import GridMap, Landmark
from ..langparse import (LEXICON, SpatialTuple, _PHRASES, render_canonical, requires_for, tokenize,
                         RELATIVE_FRONT, RELATIVE_LEFT)
from ..spatial_model import (FrameOfReference, SpatialModelConfig, absolute_for, raw_field)
from ..gridmap import center_of_mass
from ..foref.train import synth_annotate

DEFAULT_TARGETS = {
    "RedCar": ["red car", "red honda"],
    "BlueBike": ["blue bike", "blue bicycle"],
    "GreenTruck": ["green truck", "green pickup"],
    "WhiteVan": ["white van", "white minivan"],
}

GEN_RELATIONS = ("near", "at", "front", "behind", "left", "right",
                 "north", "south", "east", "west",
                 "northeast", "northwest", "southeast", "southwest")

_ONSETS = ["b", "br", "c", "d", "f", "g", "gr", "h", "k", "l", "m", "p", "r", "s", "st", "t",
           "v", "w", "z", "ch", "sh", "th", "pl", "cr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "oo"]
_CODAS = ["n", "m", "r", "l", "s", "x", "ck", "nd", "rt", "mont", "ford", "ton", "wood", "ley"]
_STREET_KINDS = ["street", "avenue", "road", "boulevard"]


def _reserved_tokens():
    toks = {t for phrase in _PHRASES for t in phrase}
    toks |= {t for syns in DEFAULT_TARGETS.values() for s in syns for t in tokenize(s)}
    toks |= set(LEXICON) | {"and", "between", "is", "the", "of", "to", "a", "an"}
    return toks


def _name(rng, used):
    reserved = _reserved_tokens()
    while True:
        n_syl = int(rng.integers(1, 3))
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       for _ in range(n_syl))
        word += _CODAS[rng.integers(len(_CODAS))]
        if len(word) >= 4 and word not in used and word not in reserved:
            used.add(word)
            return word


def generate_city(seed: int, width: int = 41, height: int = 41, name: str | None = None) -> GridMap:
    rng = np.random.default_rng(seed)
    used: set = set()
    occupied = np.zeros((width, height), dtype=bool)
    landmarks = []
    n_streets = int(rng.integers(2, 5))
    orientations = ["h", "v"] + [("h", "v")[rng.integers(2)] for _ in range(n_streets - 2)]
    placed = {"h": [], "v": []}
    for orient in orientations:
        span = height if orient == "h" else width
        w = int(rng.integers(1, 3))
        for _ in range(100):
            pos = int(rng.integers(3, span - 3 - w))
            if all(abs(pos - p) >= 8 for p in placed[orient]):
                break
        placed[orient].append(pos)
        if orient == "h":
            cells = [(x, y) for x in range(width) for y in range(pos, pos + w)]
        else:
            cells = [(x, y) for x in range(pos, pos + w) for y in range(height)]
        for c in cells:
            occupied[c] = True
        base = _name(rng, used)
        kind = _STREET_KINDS[rng.integers(len(_STREET_KINDS))]
        sid = base.capitalize() + kind.capitalize()
        landmarks.append(Landmark.make(sid, "street", [f"{base} {kind}"], cells))
    n_buildings = int(rng.integers(8, 16))
    count, attempts = 0, 0
    while count < n_buildings and attempts < 5000:
        attempts += 1
        bw, bh = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        x0, y0 = int(rng.integers(0, width - bw + 1)), int(rng.integers(0, height - bh + 1))
        # one free cell of margin around each building
        xs = slice(max(x0 - 1, 0), min(x0 + bw + 1, width))
        ys = slice(max(y0 - 1, 0), min(y0 + bh + 1, height))
        block = occupied[xs, ys]
        street_block = occupied[x0:x0 + bw, y0:y0 + bh]
        if block.any() or street_block.any():
            continue
        cells = [(x, y) for x in range(x0, x0 + bw) for y in range(y0, y0 + bh)]
        for c in cells:
            occupied[c] = True
        base = _name(rng, used)
        landmarks.append(Landmark.make(base.capitalize(), "building", [base], cells))
        count += 1
    return GridMap.from_landmarks(name or f"city{seed}", width, height, landmarks)


@dataclass(frozen=True)
class LanguageSample:
    sentence: str
    tuples: tuple
    target_cell: tuple
    frames: tuple  # FrameOfReference or None per tuple


def oracle_frame(gmap, relation, ground, rng):
    """Frame used by the simulated speaker: oracle annotation for relative relations."""
    needs, kind = requires_for(relation)
    if not needs:
        return None
    if kind in (RELATIVE_FRONT, RELATIVE_LEFT):
        which = "front" if kind == RELATIVE_FRONT else "left"
        theta = synth_annotate(gmap, ground, which, rng)
        return FrameOfReference(center_of_mass(gmap.landmarks[ground]), theta)
    return absolute_for(relation, ground, gmap)


def generate_language(gmap: GridMap, target: str, seed: int, targets: dict | None = None,
                      relations=GEN_RELATIONS, config: SpatialModelConfig | None = None) -> LanguageSample:
    if not gmap.buildings():
        raise ValueError("map has no buildings")
    targets = targets or DEFAULT_TARGETS
    config = config or SpatialModelConfig()
    rng = np.random.default_rng(seed)
    buildings = sorted(b.id for b in gmap.buildings())
    while True:
        k = int(rng.integers(1, 3))
        grounds = [buildings[i] for i in rng.choice(len(buildings), size=min(k, len(buildings)),
                                                     replace=False)]
        rels = [relations[rng.integers(len(relations))] for _ in grounds]
        tuples = tuple(SpatialTuple(target, r, g) for r, g in zip(rels, grounds))
        frames = tuple(oracle_frame(gmap, t.relation, t.ground, rng) for t in tuples)
        lookup = {(t.relation, t.ground): f for t, f in zip(tuples, frames)}
        raw = raw_field(tuples, gmap, lambda r, g: lookup[(r, g)], config)
        total = raw.sum()
        if total < 1e-12:
            continue
        idx = int(rng.choice(gmap.n_cells, p=raw / total))
        cell = (idx % gmap.width, idx // gmap.width)
        phrase = targets[target][0]
        sentence = render_canonical(phrase, [(t.relation, gmap.landmarks[t.ground].synonyms[0])
                                             for t in tuples])
        return LanguageSample(sentence, tuples, cell, frames)
