"""Benchmark suites: synthetic cities x descriptions x baselines x sensor depths."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import mos_pomdp as mp
from ..foref.train import TrainConfig, city_datasets, train_on_cities
from ..gridmap import save_map
from .generate import DEFAULT_TARGETS, LanguageSample, generate_language
from .plots import plot_completion_curves, plot_field
from .report import (aggregate, field_csv, format_table, prepositions_csv, results_csv,
                     summary_dict)
from .trials import (BASELINES, MAX_STEPS, ConfigError, TrialConfig, TrialResult, build_prior,
                     model_for_provider, run_trial)

log = logging.getLogger(__name__)


@dataclass
class ForefSettings:
    districts: int = 8
    annotations_per_landmark: int = 1
    learning_rate: float = 1e-3
    max_epochs: int = 400
    patience: int = 20
    batch_size: int = 32
    seed: int = 0


@dataclass
class SuiteConfig:
    name: str = "synthetic"
    cities: int = 5
    city_seed: int = 0
    descriptions_per_city: int = 20
    baselines: tuple = BASELINES
    depths: tuple = (3,)
    max_steps: int = MAX_STEPS
    simulations: int = 1000
    seed: int = 0
    for_source: str = "learned"       # learned | oracle
    heatmaps: bool = False
    foref: ForefSettings = field(default_factory=ForefSettings)

    @classmethod
    def from_dict(cls, data: dict) -> "SuiteConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known - {"out_dir"}
        if unknown:
            raise ConfigError(f"unknown suite field(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        data.pop("out_dir", None)
        fs = data.pop("foref", {}) or {}
        try:
            foref = ForefSettings(**fs)
        except TypeError as e:
            raise ConfigError(f"foref: {e}") from e
        cfg = cls(**data, foref=foref)
        cfg.baselines = tuple(cfg.baselines)
        cfg.depths = tuple(int(d) for d in cfg.depths)
        cfg.validate()
        return cfg

    def validate(self):
        for b in self.baselines:
            if b not in BASELINES:
                raise ConfigError(f"baselines: unknown baseline {b!r}")
        for d in self.depths:
            if d not in (3, 4, 5):
                raise ConfigError(f"depths: sensor depth must be 3, 4 or 5, got {d}")
        if self.cities < 1 or self.descriptions_per_city < 1:
            raise ConfigError("cities and descriptions_per_city must be >= 1")
        if self.for_source not in ("learned", "oracle"):
            raise ConfigError(f"for_source: must be 'learned' or 'oracle', got {self.for_source!r}")
        if not 1 <= self.max_steps <= MAX_STEPS:
            raise ConfigError(f"max_steps: must be in [1, {MAX_STEPS}]")


@dataclass
class Task:
    """One search task: a described target in one city, shared by every baseline."""
    task_id: str
    city: int
    sample: LanguageSample
    target: str
    robot: mp.RobotPose
    seed: int


def make_tasks(cfg: SuiteConfig, maps):
    tasks = []
    names = sorted(DEFAULT_TARGETS)
    for ci, gmap in enumerate(maps):
        for j in range(cfg.descriptions_per_city):
            seed = int(np.random.SeedSequence([cfg.seed, ci, j]).generate_state(1)[0])
            target = names[j % len(names)]
            sample = generate_language(gmap, target, seed)
            rng = np.random.default_rng([seed, 7])
            robot = mp.RobotPose(int(rng.integers(gmap.width)), int(rng.integers(gmap.height)),
                                 int(rng.integers(8)))
            tasks.append(Task(f"c{ci}-t{j:02d}", ci, sample, target, robot, seed))
    return tasks


def train_city_models(cfg: SuiteConfig, city_seeds):
    """Leave-one-city-out FoR models: models[i] never saw city i."""
    fs = cfg.foref
    data = {kind: city_datasets(city_seeds, kind, fs.districts, fs.annotations_per_landmark,
                                seed=fs.seed) for kind in ("front", "left")}
    models = []
    for i in range(len(city_seeds)):
        pair = {}
        for kind in ("front", "left"):
            rest = [d for j, c in enumerate(data[kind]) if j != i for d in c]
            tc = TrainConfig(learning_rate=fs.learning_rate, batch_size=fs.batch_size,
                             max_epochs=fs.max_epochs, patience=fs.patience,
                             augment=(kind == "front"), seed=fs.seed)
            pair[kind], _ = train_on_cities(rest, kind, "EGO_CTX", tc)
        models.append(pair)
        log.info("trained FoR models for held-out city %d", i)
    return models


def run_suite(cfg: SuiteConfig, out_dir=None, progress=None):
    """Run the trial matrix; returns (results, report). Files are written when out_dir is set."""
    city_seeds = [cfg.city_seed + i for i in range(cfg.cities)]
    datasets = None
    maps = []
    from .generate import generate_city
    from ..foref.train import district_seed
    for cs in city_seeds:
        maps.append(generate_city(district_seed(cs, 0), name=f"city{cs}"))
    models = train_city_models(cfg, city_seeds) if (
        cfg.for_source == "learned" and "slu" in cfg.baselines) else [{} for _ in maps]
    tasks = make_tasks(cfg, maps)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        for gmap in maps:
            save_map(gmap, out / f"{gmap.name}.json")
    results, failures = [], []
    for task in tasks:
        gmap = maps[task.city]
        overrides = None
        if cfg.for_source == "oracle":
            overrides = {("front" if t.relation in ("front", "behind") else "left", t.ground): f
                         for t, f in zip(task.sample.tuples, task.sample.frames)
                         if t.relation in ("front", "behind", "left", "right")}
        for depth in cfg.depths:
            for baseline in cfg.baselines:
                tid = f"{task.task_id}|{baseline}|d{depth}"
                tc = TrialConfig(map=gmap, targets={task.target: task.sample.target_cell},
                                 robot=task.robot, sensor_depth=depth, prior=baseline,
                                 language=task.sample.sentence, seed=task.seed,
                                 max_steps=cfg.max_steps, simulations=cfg.simulations,
                                 trial_id=tid, foref_models=models[task.city])
                provider = model_for_provider(gmap, models[task.city], overrides)
                try:
                    res, prior = run_trial(tc, for_provider=provider, return_belief=True)
                except Exception as e:  # recorded per trial; the suite keeps going
                    log.exception("trial %s failed", tid)
                    failures.append({"trial_id": tid, "error": f"{type(e).__name__}: {e}"})
                    results.append(TrialResult(tid, baseline, depth, 0, False, 0.0, task.seed,
                                               task.sample.sentence, [], error=str(e)))
                    continue
                results.append(res)
                if out and cfg.heatmaps and depth == cfg.depths[0]:
                    h = prior.hist[task.target]
                    stem = out / "fields" / tid.replace("|", "_")
                    stem.parent.mkdir(exist_ok=True)
                    stem.with_suffix(".csv").write_text(field_csv(h, gmap.width), encoding="utf-8")
                    plot_field(h, gmap, stem.with_suffix(".svg"), title=task.sample.sentence,
                               target=task.sample.target_cell, robot=(task.robot.x, task.robot.y))
                if progress:
                    progress(res)
    report = aggregate(results, cfg.max_steps, failures)
    if out:
        (out / "results.csv").write_text(results_csv(results), encoding="utf-8")
        (out / "prepositions.csv").write_text(prepositions_csv(report), encoding="utf-8")
        (out / "summary.json").write_text(json.dumps(summary_dict(report), indent=2), encoding="utf-8")
        (out / "summary.txt").write_text(format_table(report) + "\n", encoding="utf-8")
        plot_completion_curves(report, out / "curves.svg")
    return results, report
