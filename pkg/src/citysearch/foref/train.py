"""Training, label oracle, FoR prediction and cross-validated evaluation."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..gridmap import GridMap, center_of_mass, closest_cell, Landmark
from ..langparse import RELATIVE_FRONT, RELATIVE_LEFT, requires_for
from ..spatial_model import ContractError, FrameOfReference
from .net import TWO_PI, ForefModel, angular_deviation, loss
from .render import EGO, EGO_CTX, VARIANTS, ContextImage, render_context, rotate_map

log = logging.getLogger(__name__)

ANNOTATION_NOISE = 0.2


@dataclass(frozen=True)
class ForefSample:
    image: ContextImage
    label: float
    city: str
    ground_id: str

    def __post_init__(self):
        object.__setattr__(self, "label", float(self.label) % TWO_PI)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 20
    augment: bool = False
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.max_epochs > 0
                and self.patience > 0):
            raise ValueError("learning rate, batch size, max epochs and patience must be positive")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def synth_annotate(gmap: GridMap, ground_id: str, kind: str, rng=None,
                   noise: float = ANNOTATION_NOISE) -> float:
    """Oracle FoR label: front faces the nearest street, left is absolute west."""
    lm = gmap.landmarks[ground_id]
    eps = 0.0 if (rng is None or noise == 0) else rng.normal(0.0, noise)
    if kind == "left":
        return (math.pi + eps) % TWO_PI
    if kind != "front":
        raise ValueError(f"unknown FoR kind {kind!r}")
    com = center_of_mass(lm)
    street_cells = sorted({c for s in gmap.streets() for c in s.cells})
    if street_cells:
        target, _ = closest_cell(com, Landmark.make("_streets", "street", [], street_cells))
    else:
        target = ((gmap.width - 1) / 2, (gmap.height - 1) / 2)
    theta = math.atan2(target[1] - com.y, target[0] - com.x)
    return (theta + eps) % TWO_PI


def stop_epoch(val_losses, patience: int) -> tuple[int | None, int]:
    """(epoch to stop at or None, best epoch), epochs numbered from 1."""
    best, best_epoch, since = math.inf, 0, 0
    for epoch, v in enumerate(val_losses, start=1):
        if v < best:
            best, best_epoch, since = v, epoch, 0
        else:
            since += 1
            if since >= patience:
                return epoch, best_epoch
    return None, best_epoch


def augment_rotations(gmap: GridMap, ground_id: str, label: float, variant: str, city: str):
    """The sample re-rendered at 0, 90, 180 and 270 degrees, labels rotated to match."""
    out = []
    for k in range(4):
        rotated = gmap if k == 0 else rotate_map(gmap, k)
        out.append(ForefSample(render_context(rotated, ground_id, variant),
                               label + k * math.pi / 2, city, ground_id))
    return out


def _stack(samples):
    return (np.stack([s.image.pixels for s in samples]),
            np.array([s.label for s in samples]))


def train(train_samples, val_samples, config: TrainConfig | None = None, variant="front"):
    """Mini-batch Adam with early stopping; returns the best-validation model and history."""
    config = config or TrainConfig()
    if len(train_samples) < 1 or len(val_samples) < 1:
        raise ValueError("training and validation splits must be non-empty")
    x, y = _stack(train_samples)
    vx, vy = _stack(val_samples)
    dtype = np.dtype(config.dtype)
    x, vx = x.astype(dtype), vx.astype(dtype)
    rng = np.random.default_rng(config.seed)
    model = ForefModel(variant=variant, seed=config.seed, dtype=dtype)
    best_model, best = model.copy(), math.inf
    hist = TrainHistory()
    since = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), config.batch_size):
            idx = order[s:s + config.batch_size]
            l, grads = model.loss_and_grads(x[idx], y[idx])
            if not math.isfinite(l):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            model.adam_step(grads, config.learning_rate, config.beta1, config.beta2, config.eps)
            total += l * len(idx)
        hist.train_loss.append(total / len(x))
        v = loss(model.forward(vx), vy)
        if not math.isfinite(v):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        hist.val_loss.append(v)
        if v < best:
            best, best_model, hist.best_epoch, since = v, model.copy(), epoch, 0
        else:
            since += 1
        hist.stopped_epoch = epoch
        if since >= config.patience:
            break
    log.debug("trained %s: best epoch %d val %.4f (stopped %d)",
              variant, hist.best_epoch, best, hist.stopped_epoch)
    return best_model, hist


def predict_for(models: dict, gmap: GridMap, ground_id: str, relation: str) -> FrameOfReference:
    """Predicted frame for a relative relation; behind/right reuse the front/left model."""
    kind = requires_for(relation)[1]
    if kind == RELATIVE_FRONT:
        key = "front"
    elif kind == RELATIVE_LEFT:
        key = "left"
    else:
        raise ContractError(f"{relation!r} does not take a predicted frame of reference")
    if key not in models:
        raise FileNotFoundError(f"no {key} model loaded")
    image = render_context(gmap, ground_id, EGO_CTX)
    theta = float(models[key].predict(image.pixels)[0])
    return FrameOfReference(center_of_mass(gmap.landmarks[ground_id]), theta)


# -- datasets and cross-validation -----------------------------------------

@dataclass(frozen=True)
class Annotation:
    map: str
    ground: str
    kind: str
    label_radians: float


def annotate_city(gmap: GridMap, kind: str, rng, per_landmark: int = 3, noise=ANNOTATION_NOISE):
    """Several independent oracle annotations for every building."""
    out = []
    for lm in sorted(gmap.buildings(), key=lambda l: l.id):
        for _ in range(per_landmark):
            out.append(Annotation(gmap.name, lm.id, kind, synth_annotate(gmap, lm.id, kind, rng, noise)))
    return out


def write_dataset(annotations, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for a in annotations:
            f.write(json.dumps({"map": a.map, "ground": a.ground, "kind": a.kind,
                                "label_radians": a.label_radians}) + "\n")


def read_dataset(path) -> list:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(Annotation(d["map"], d["ground"], d["kind"], float(d["label_radians"])))
    return out


def build_samples(gmap: GridMap, annotations, variant: str, augment: bool = False):
    samples = []
    for a in annotations:
        if augment:
            samples.extend(augment_rotations(gmap, a.ground, a.label_radians, variant, gmap.name))
        else:
            samples.append(ForefSample(render_context(gmap, a.ground, variant),
                                       a.label_radians, gmap.name, a.ground))
    return samples


def _split_validation(annotations, rng, fraction=0.2):
    grounds = sorted({(a.map, a.ground) for a in annotations})
    n_val = max(1, int(round(fraction * len(grounds))))
    chosen = {grounds[i] for i in rng.choice(len(grounds), size=n_val, replace=False)}
    val = [a for a in annotations if (a.map, a.ground) in chosen]
    tr = [a for a in annotations if (a.map, a.ground) not in chosen]
    return tr, val


def train_on_cities(cities, kind: str, variant: str, config: TrainConfig):
    """Train one model on a list of (GridMap, annotations) with a landmark-level validation split."""
    rng = np.random.default_rng(config.seed)
    train_s, val_s = [], []
    for gmap, anns in cities:
        tr, va = _split_validation(anns, rng)
        train_s += build_samples(gmap, tr, variant, augment=config.augment and kind == "front")
        val_s += build_samples(gmap, va, variant)
    return train(train_s, val_s, config, variant=kind)


RANDOM_DRAWS = 1000


def noise_floor(annotations) -> float:
    """Mean deviation between pairs of annotations of the same landmark."""
    by = {}
    for a in annotations:
        by.setdefault((a.map, a.ground), []).append(a.label_radians)
    devs = [angular_deviation(v[i], v[j]) for v in by.values()
            for i in range(len(v)) for j in range(i + 1, len(v))]
    return float(np.mean(devs)) if devs else float("nan")


def evaluate_crossval(cities, kind: str = "front", config: TrainConfig | None = None,
                      variants=VARIANTS, seed: int = 0):
    """Leave-one-city-out evaluation.

    ``cities`` holds one entry per city; each entry is a list of
    (GridMap, annotations) districts. Returns one dict per split with the
    held-out city and the mean angular deviation of every model.
    """
    if len(cities) < 5:
        raise ValueError(f"need 5 city datasets, got {len(cities)}")
    config = config or TrainConfig()
    rng = np.random.default_rng(seed)
    results = []
    for i, held in enumerate(cities):
        rest = [d for j, c in enumerate(cities) if j != i for d in c]
        labels = np.array([a.label_radians for _, anns in held for a in anns])
        if len(labels) < 2:
            raise ValueError(f"city {i} has fewer than 2 samples")
        row = {"city": held[0][0].name, "n": int(len(labels))}
        for variant in variants:
            model, hist = train_on_cities(rest, kind, variant, config)
            images = np.stack([render_context(m, a.ground, variant).pixels
                               for m, anns in held for a in anns])
            row[variant] = float(np.mean(angular_deviation(model.predict(images), labels)))
            row[f"{variant}_epochs"] = hist.stopped_epoch
        # many uniform draws per label so the baseline itself is not noisy
        guesses = rng.uniform(0, TWO_PI, (RANDOM_DRAWS, len(labels)))
        row["Random"] = float(np.mean(angular_deviation(guesses, labels[None, :])))
        row["NoiseFloor"] = noise_floor([a for _, anns in held for a in anns])
        results.append(row)
    return results


def city_datasets(city_seeds, kind: str, districts: int = 4, per_landmark: int = 2,
                  seed: int = 0, noise: float = ANNOTATION_NOISE):
    """Synthetic annotated cities: each city is ``districts`` generated maps."""
    from ..harness.generate import generate_city

    rng = np.random.default_rng(seed)
    out = []
    for cs in city_seeds:
        ds = []
        for d in range(districts):
            m = generate_city(district_seed(cs, d), name=f"city{cs}" if d == 0 else f"city{cs}-d{d}")
            ds.append((m, annotate_city(m, kind, rng, per_landmark, noise)))
        out.append(ds)
    return out


def district_seed(city_seed: int, district: int) -> int:
    return int(city_seed) * 1000 + int(district)
