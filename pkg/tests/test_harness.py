import math

import numpy as np
import pytest

from citysearch import mos_pomdp as mp
from citysearch.gridmap import GridMap, Landmark
from citysearch.harness.generate import DEFAULT_TARGETS, generate_city, generate_language
from citysearch.harness.report import aggregate, completion_curve, mean_ci, paired_gap, results_csv
from citysearch.harness.suite import SuiteConfig, make_tasks, run_suite
from citysearch.harness.trials import (ConfigError, TrialConfig, TrialResult, reward_bounds,
                                       run_trial, trial_from_json)
from citysearch.langparse import extract_tuples
from citysearch.spatial_model import SpatialModelConfig


# -- generation ----------------------------------------------------------------

def test_generate_city_deterministic():
    assert generate_city(3).to_json() == generate_city(3).to_json()


def test_generate_city_constraints():
    for seed in range(20):
        g = generate_city(seed)
        streets, buildings = g.streets(), g.buildings()
        assert 2 <= len(streets) <= 4
        assert 8 <= len(buildings) <= 15
        seen = set()
        for lm in buildings:
            xs = {x for x, _ in lm.cells}
            ys = {y for _, y in lm.cells}
            assert 2 <= len(xs) <= 5 and 2 <= len(ys) <= 5
            assert len(lm.cells) == len(xs) * len(ys)
            assert not seen & set(lm.cells)
            seen |= set(lm.cells)
        street_cells = {c for s in streets for c in s.cells}
        assert not seen & street_cells


def test_five_seeds_distinct():
    sets = [frozenset(generate_city(s).landmarks) for s in range(5)]
    assert len(set(sets)) == 5


def test_generated_language_round_trips():
    g = generate_city(1)
    for seed in range(40):
        target = sorted(DEFAULT_TARGETS)[seed % 4]
        s = generate_language(g, target, seed)
        parsed = extract_tuples(s.sentence, g, DEFAULT_TARGETS)
        assert set(parsed.tuples) == set(s.tuples), s.sentence
        assert g.in_bounds(*s.target_cell)
        assert generate_language(g, target, seed) == s


def test_near_samples_within_three_sigma():
    g = GridMap.from_landmarks("n", 41, 41, [Landmark.make("Hub", "building", ["hub"], [(20, 20), (21, 20)])])
    sigma = SpatialModelConfig().sigma("near", g.landmarks["Hub"])
    inside = 0
    for seed in range(1000):
        s = generate_language(g, "RedCar", seed, relations=("near",))
        d = min(math.dist(s.target_cell, c) for c in g.landmarks["Hub"].cells)
        inside += d <= 3 * sigma
    assert inside >= 990


# -- trials --------------------------------------------------------------------

def corridor_trial(**kw):
    g = GridMap.from_landmarks("corr", 7, 1, [Landmark.make("Box", "building", ["box"], [(6, 0)])])
    base = dict(map=g, targets={"RedCar": (3, 0)}, robot=mp.RobotPose(0, 0, 0), prior="informed",
                language="the red car is near the box", seed=1)
    base.update(kw)
    return TrialConfig(**base)


def test_informed_adjacent_trial():
    res = run_trial(corridor_trial())
    assert res.success and res.steps == 1
    assert res.discounted_reward == pytest.approx(1000.0)


def test_step_cap_failure():
    res = run_trial(corridor_trial(targets={"RedCar": (3, 0)}, robot=mp.RobotPose(0, 0, 4),
                                   epsilon=1.0, prior="uniform", max_steps=200, simulations=20))
    lo, hi = reward_bounds(1, res.steps)
    assert lo <= res.discounted_reward <= hi
    assert res.steps <= 200


def test_trial_config_errors():
    with pytest.raises(ConfigError, match="prior"):
        run_trial(corridor_trial(prior="oracle"))
    with pytest.raises(ConfigError, match="sensor_depth"):
        run_trial(corridor_trial(sensor_depth=7))
    with pytest.raises(ConfigError, match="targets"):
        run_trial(corridor_trial(targets={"RedCar": (9, 9)}))
    with pytest.raises(ConfigError, match="max_steps"):
        run_trial(corridor_trial(max_steps=201))


def test_trial_from_json(example_map, tmp_path):
    from citysearch.gridmap import save_map
    save_map(example_map, tmp_path / "m.json")
    cfg = trial_from_json({"map": "m.json", "targets": [{"id": "RedCar", "cell": [3, 4]}],
                           "robot": [1, 2, 3], "sensor_depth": 4, "epsilon": 0.1, "prior": "keyword",
                           "language": "the red car is near hilo", "seed": 9, "max_steps": 50},
                          tmp_path)
    assert cfg.targets == {"RedCar": (3, 4)} and cfg.robot == mp.RobotPose(1, 2, 3)
    assert (cfg.sensor_depth, cfg.epsilon, cfg.prior, cfg.seed, cfg.max_steps) == (4, 0.1, "keyword", 9, 50)
    with pytest.raises(ConfigError, match="robot"):
        trial_from_json({"map": "m.json", "targets": [{"id": "RedCar", "cell": [3, 4]}], "robot": [1]}, tmp_path)
    with pytest.raises(ConfigError, match="map"):
        trial_from_json({"targets": []}, tmp_path)


def test_uniform_worse_than_informed():
    g = generate_city(2)
    rng = np.random.default_rng(0)
    totals = {"informed": [], "uniform": []}
    for seed in range(30):
        cell = (int(rng.integers(41)), int(rng.integers(41)))
        robot = mp.RobotPose(int(rng.integers(41)), int(rng.integers(41)), int(rng.integers(8)))
        for prior in totals:
            cfg = TrialConfig(map=g, targets={"RedCar": cell}, robot=robot, prior=prior, seed=seed,
                              max_steps=60, simulations=300)
            totals[prior].append(run_trial(cfg).discounted_reward)
    assert np.mean(totals["uniform"]) < np.mean(totals["informed"])


# -- reporting -----------------------------------------------------------------

def _r(tid, baseline, steps, success, reward, rel=("near",)):
    return TrialResult(f"{tid}|{baseline}|d3", baseline, 3, steps, success, reward, 0, "",
                       [("t", r, "g") for r in rel])


def test_completion_curve_and_aggregate():
    rs = [_r("a", "slu", 5, True, 500), _r("b", "slu", 200, False, -200), _r("c", "slu", 17, True, 300, ("behind",)),
          _r("a", "keyword", 9, True, 400), _r("b", "keyword", 200, False, -200),
          _r("c", "keyword", 200, False, -200, ("behind",))]
    curve = completion_curve([r for r in rs if r.baseline == "slu"], 200)
    assert len(curve) == 200 and curve[4] == 1 and curve[16] == 2 and curve[-1] == 2
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    rep = aggregate(rs)
    assert rep.summary("slu", 3).successes == 2 == rep.summary("slu", 3).curve[-1]
    m, lo, hi = rep.gaps[("slu", "keyword", 3)]
    assert m == pytest.approx((100 + 0 + 500) / 3)
    assert paired_gap(rs, "slu", "keyword", 3) == (m, lo, hi)
    rel_n = {(row["relation"], row["baseline"]): row["n"] for row in rep.prepositions}
    assert rel_n[("near", "slu")] == 2 and rel_n[("behind", "slu")] == 1


def test_mean_ci():
    m, lo, hi = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0 and hi - m == pytest.approx(1.96 / math.sqrt(3))
    assert mean_ci([4.0]) == (4.0, 4.0, 4.0)


def test_results_csv_rows():
    rs = [_r("a", "slu", 5, True, 500), _r("b", "uniform", 200, False, -199.5)]
    text = results_csv(rs)
    lines = text.strip().splitlines()
    assert lines[0] == "trial_id,baseline,depth,seed,steps,success,discounted_reward,relations"
    assert len(lines) == 3


# -- suite ---------------------------------------------------------------------

def test_small_suite_outputs(tmp_path):
    cfg = SuiteConfig(cities=1, descriptions_per_city=2, depths=(3,), for_source="oracle",
                      max_steps=15, simulations=100, heatmaps=True)
    results, report = run_suite(cfg, tmp_path / "a")
    assert len(results) == 2 * 4
    rows = (tmp_path / "a" / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + len(results)
    for name in ("curves.svg", "summary.json", "summary.txt", "prepositions.csv"):
        assert (tmp_path / "a" / name).exists()
    assert list((tmp_path / "a" / "fields").glob("*.svg"))
    run_suite(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "a" / "curves.svg").read_bytes() == (tmp_path / "b" / "curves.svg").read_bytes()


def test_tasks_shared_across_baselines():
    cfg = SuiteConfig(cities=1, descriptions_per_city=3)
    maps = [generate_city(0)]
    t1, t2 = make_tasks(cfg, maps), make_tasks(cfg, maps)
    assert [t.task_id for t in t1] == ["c0-t00", "c0-t01", "c0-t02"]
    assert [(t.robot, t.sample.target_cell) for t in t1] == [(t.robot, t.sample.target_cell) for t in t2]


def test_suite_config_validation():
    with pytest.raises(ConfigError):
        SuiteConfig.from_dict({"depths": [2]})
    with pytest.raises(ConfigError):
        SuiteConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        SuiteConfig.from_dict({"baselines": ["oracle"]})
