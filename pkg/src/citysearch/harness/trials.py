"""Single search trials: prior construction per baseline and the search loop."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import mos_pomdp as mp
from ..foref.train import predict_for
from ..gridmap import GridMap, load_map, map_from_dict
from ..langparse import RELATIVE_FRONT, RELATIVE_LEFT, extract_tuples, requires_for
from ..planner import MosModel, PlannerConfig, run_episode
from ..spatial_model import (ContractError, SpatialModelConfig, absolute_for,
                             language_likelihood_field)
from .generate import DEFAULT_TARGETS

DISCOUNT = 0.95
MAX_STEPS = 200
BASELINES = ("informed", "slu", "keyword", "uniform")


class ConfigError(ValueError):
    """Invalid trial or suite configuration; the message names the field."""


@dataclass
class TrialConfig:
    map: GridMap
    targets: dict                     # id -> (x, y)
    robot: mp.RobotPose
    sensor_depth: int = 3
    epsilon: float = 0.0
    prior: str = "slu"
    language: str = ""
    seed: int = 0
    max_steps: int = MAX_STEPS
    simulations: int = 1000
    trial_id: str = "trial"
    vocabulary: dict = field(default_factory=lambda: dict(DEFAULT_TARGETS))
    foref_models: dict = field(default_factory=dict)   # 'front'/'left' -> ForefModel

    def validate(self):
        if self.prior not in BASELINES:
            raise ConfigError(f"prior: unknown baseline {self.prior!r}")
        if self.sensor_depth not in (3, 4, 5):
            raise ConfigError(f"sensor_depth: must be 3, 4 or 5, got {self.sensor_depth!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon: must be in [0, 1], got {self.epsilon!r}")
        if not 1 <= self.max_steps <= MAX_STEPS:
            raise ConfigError(f"max_steps: must be in [1, {MAX_STEPS}], got {self.max_steps!r}")
        if not self.targets:
            raise ConfigError("targets: at least one target is required")
        for t, c in self.targets.items():
            if not self.map.in_bounds(*c):
                raise ConfigError(f"targets: cell {c} of {t!r} is out of bounds")
        if not self.map.in_bounds(self.robot.x, self.robot.y):
            raise ConfigError(f"robot: pose {self.robot} is out of bounds")


@dataclass
class TrialResult:
    trial_id: str
    baseline: str
    depth: int
    steps: int
    success: bool
    discounted_reward: float
    seed: int
    language: str
    tuples: list
    error: str = ""

    @property
    def relations(self) -> list:
        return sorted({t[1] for t in self.tuples})


def trial_from_json(data: dict, base_dir=".") -> TrialConfig:
    """Build a TrialConfig from the trial JSON interface."""
    from ..foref.net import ForefModel
    from ..langparse import load_targets

    base = Path(base_dir)
    try:
        mref = data["map"]
    except KeyError:
        raise ConfigError("map: missing") from None
    try:
        gmap = map_from_dict(mref) if isinstance(mref, dict) else load_map(base / mref)
    except (OSError, ValueError) as e:
        raise ConfigError(f"map: {e}") from e
    try:
        targets = {t["id"]: tuple(int(v) for v in t["cell"]) for t in data["targets"]}
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"targets: malformed ({e})") from e
    try:
        rx, ry, rh = (int(v) for v in data["robot"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"robot: expected [x, y, heading_index] ({e})") from e
    vocab = dict(DEFAULT_TARGETS)
    if "vocabulary" in data:
        vocab = load_targets(base / data["vocabulary"])
    models = {}
    for k, path in (data.get("foref_models") or {}).items():
        try:
            models[k] = ForefModel.load(base / path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"foref_models.{k}: {e}") from e
    cfg = TrialConfig(
        map=gmap, targets=targets, robot=mp.RobotPose(rx, ry, rh),
        sensor_depth=data.get("sensor_depth", 3), epsilon=float(data.get("epsilon", 0.0)),
        prior=data.get("prior", "slu"), language=data.get("language", ""),
        seed=int(data.get("seed", 0)), max_steps=int(data.get("max_steps", MAX_STEPS)),
        simulations=int(data.get("simulations", 1000)),
        trial_id=str(data.get("trial_id", "trial")), vocabulary=vocab, foref_models=models)
    cfg.validate()
    return cfg


def model_for_provider(gmap: GridMap, models: dict, overrides: dict | None = None):
    """Frames for the slu prior: cardinal table, or the learned FoR models for relative words."""
    overrides = overrides or {}
    cache = {}

    def provide(relation, ground):
        needs, kind = requires_for(relation)
        if not needs:
            return None
        if kind not in (RELATIVE_FRONT, RELATIVE_LEFT):
            return absolute_for(relation, ground, gmap)
        key = ("front" if kind == RELATIVE_FRONT else "left", ground)
        if key in overrides:
            return overrides[key]
        if key not in cache:
            if key[0] not in models:
                raise ConfigError(f"foref_models: {key[0]!r} model needed for {relation!r}")
            cache[key] = predict_for(models, gmap, ground, relation)
        return cache[key]

    return provide


def build_prior(cfg: TrialConfig, observation, for_provider=None,
                spatial: SpatialModelConfig | None = None) -> mp.Belief:
    targets = sorted(cfg.targets)
    if cfg.prior == "slu":
        provider = for_provider or model_for_provider(cfg.map, cfg.foref_models)
        fields = {t: language_likelihood_field(observation.for_figure(t), cfg.map, provider, spatial)
                  for t in targets}
        return mp.init_belief("slu", cfg.map, targets, cfg.robot, fields=fields)
    if cfg.prior == "keyword":
        grounds = {t: [tp.ground for tp in observation.for_figure(t)] for t in targets}
        return mp.init_belief("keyword", cfg.map, targets, cfg.robot, grounds=grounds)
    if cfg.prior == "informed":
        return mp.init_belief("informed", cfg.map, targets, cfg.robot, true_cells=cfg.targets)
    return mp.init_belief("uniform", cfg.map, targets, cfg.robot)


def run_trial(cfg: TrialConfig, for_provider=None, diagnostics=None,
              spatial: SpatialModelConfig | None = None, return_belief=False):
    cfg.validate()
    observation = extract_tuples(cfg.language, cfg.map, cfg.vocabulary)
    belief = build_prior(cfg, observation, for_provider, spatial)
    prior = belief
    sensor = mp.SensorConfig(depth=cfg.sensor_depth, epsilon=cfg.epsilon)
    targets = tuple(sorted(cfg.targets))
    model = MosModel(cfg.map, sensor, targets)
    rng = np.random.default_rng(cfg.seed)
    env = mp.Environment(cfg.map, sensor, mp.MosState(dict(cfg.targets), cfg.robot),
                         np.random.default_rng([cfg.seed, 1]))
    episode = run_episode(belief, model, PlannerConfig(simulations=cfg.simulations), env, rng,
                          max_steps=cfg.max_steps, discount=DISCOUNT, diagnostics=diagnostics)
    result = TrialResult(cfg.trial_id, cfg.prior, cfg.sensor_depth, episode.steps, episode.success,
                         episode.discounted_reward, cfg.seed, cfg.language,
                         sorted((t.figure, t.relation, t.ground) for t in observation.tuples))
    if return_belief:
        return result, prior
    return result


def reward_bounds(n_targets: int, steps: int, discount: float = DISCOUNT) -> tuple[float, float]:
    lower = -(10 + 1000) * sum(discount ** t for t in range(steps))
    return lower, 1000.0 * n_targets
