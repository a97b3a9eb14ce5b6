"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The FoR cross-validation and the end-to-end search suite are slow (tens of
minutes on one CPU core); everything else runs in seconds.
"""
import json
import math
import time

import numpy as np
import pytest

from citysearch import DATA_DIR
from citysearch import mos_pomdp as mp
from citysearch.foref.net import ForefModel, angular_deviation, loss
from citysearch.foref.train import (Annotation, TrainConfig, city_datasets, evaluate_crossval,
                                    noise_floor, synth_annotate)
from citysearch.gridmap import GridMap, Landmark, Point, load_map
from citysearch.harness.generate import DEFAULT_TARGETS, generate_city
from citysearch.harness.suite import ForefSettings, SuiteConfig, run_suite
from citysearch.langparse import (LEXICON, SpatialTuple, extract_tuples, load_targets,
                                  render_canonical)
from citysearch.planner import MosModel, PlannerConfig, plan
from citysearch.spatial_model import (FrameOfReference, SpatialModelConfig, default_for_provider,
                                      language_likelihood_field, relation_likelihood)

from conftest import ACCEPTANCE
from oracles import best_first_actions, brute_bayes, brute_field, brute_relation_weight


def record(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[n])
    return ok


# -- 1. observation model --------------------------------------------------------

def test_criterion_1_observation_model():
    t0 = time.perf_counter()
    errs = []
    g1 = GridMap.from_landmarks("one", 21, 21, [Landmark.make("G", "building", [], [(10, 10)])])
    cfg = SpatialModelConfig()
    s_near = cfg.sigma("near", g1.landmarks["G"])
    w, _ = relation_likelihood(SpatialTuple("f", "near", "G"), None, (10 + s_near, 10), g1, cfg)
    errs.append(abs(w - math.exp(-0.5)))
    w, _ = relation_likelihood(SpatialTuple("f", "near", "G"), None, (10, 10), g1, cfg)
    errs.append(abs(w - 1.0))
    frame = FrameOfReference(Point(10, 10), 0.0)
    w, tr = relation_likelihood(SpatialTuple("f", "front", "G"), frame, (10, 14), g1, cfg)
    errs.append(abs(tr.dot_factor))
    s_front = cfg.sigma("front", g1.landmarks["G"])
    w, _ = relation_likelihood(SpatialTuple("f", "front", "G"), frame, (10 + s_front, 10), g1, cfg)
    errs.append(abs(w - math.exp(-0.5)))

    rng = np.random.default_rng(0)
    rels = ["near", "at", "front", "behind", "left", "right", "north", "southwest", "east"]
    for trial in range(12):
        cells_a = {(int(rng.integers(1, 4)), int(rng.integers(1, 4))) for _ in range(3)}
        cells_b = {(int(rng.integers(6, 9)), int(rng.integers(5, 9))) for _ in range(2)}
        g = GridMap.from_landmarks("m", 10, 10, [Landmark.make("A", "building", [], sorted(cells_a)),
                                                Landmark.make("B", "building", [], sorted(cells_b))])
        mode = ("rectified", "abs")[trial % 2]
        lam = (1.0, 0.9)[(trial // 2) % 2]
        cfg = SpatialModelConfig(dot_mode=mode, mixture_weight=lam)
        theta_f, theta_l = rng.uniform(0, 2 * math.pi, 2)
        com_a = Point(*np.mean(sorted(cells_a), axis=0))
        com_b = Point(*np.mean(sorted(cells_b), axis=0))
        overrides = {("front", "A"): FrameOfReference(com_a, theta_f),
                     ("left", "A"): FrameOfReference(com_a, theta_l),
                     ("front", "B"): FrameOfReference(com_b, theta_f),
                     ("left", "B"): FrameOfReference(com_b, theta_l)}
        provider = default_for_provider(g, overrides)
        tuples = [SpatialTuple("f", rels[int(rng.integers(len(rels)))], "A"),
                  SpatialTuple("f", rels[int(rng.integers(len(rels)))], "B")]
        field = language_likelihood_field(tuples, g, provider, cfg)
        thetas = {"front": theta_f, "behind": theta_f, "left": theta_l, "right": theta_l,
                  "north": math.pi / 2, "southwest": 5 * math.pi / 4, "east": 0.0}
        weights = []
        for t in tuples:
            lm = g.landmarks[t.ground]
            th = thetas.get(t.relation)
            weights.append([brute_relation_weight(t.relation, th, (i % 10, i // 10), lm.cells,
                                                  cfg.sigma(t.relation, lm), mode)
                            for i in range(100)])
        ref = np.array(brute_field(weights, 100, lam))
        errs.append(float(np.max(np.abs(field - ref))))
    elapsed = time.perf_counter() - t0
    worst = max(errs)
    ok = record(1, worst <= 1e-9 and elapsed < 1.0, f"max error {worst:.2e}, {elapsed:.2f} s")
    assert ok


# -- 2. loss identities ----------------------------------------------------------

def test_criterion_2_loss_identities():
    exact = [
        angular_deviation(0.5, 0) == pytest.approx(0.5, abs=1e-15),
        angular_deviation(2 * math.pi - 0.5, 0) == pytest.approx(0.5, abs=1e-12),
        angular_deviation(math.pi, 0) == math.pi,
        loss([0.3, 4.0], [0.3, 4.0]) == 0.0,
        loss([math.pi], [0.0]) == math.pi ** 2,
        loss([0.5, 2 * math.pi - 0.5], [0, 0]) == pytest.approx(0.25, abs=1e-12),
    ]
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 6))
        p, t = rng.uniform(-30, 30, n), rng.uniform(-30, 30, n)
        k = rng.integers(-4, 5, n)
        l = loss(p, t)
        bad += not (abs(l - loss(t, p)) < 1e-9 and abs(l - loss(p + 2 * math.pi * k, t)) < 1e-9
                    and abs(l - loss(p, t - 2 * math.pi * k)) < 1e-9)
    ok = record(2, all(exact) and bad == 0, f"{sum(exact)}/6 identities, {bad} property violations in 10^4")
    assert ok


# -- 3. exact filtering ------------------------------------------------------------

def test_criterion_3_exact_filtering():
    t0 = time.perf_counter()
    g = GridMap.from_landmarks("open", 10, 10, [])
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        depth = int(rng.integers(3, 6))
        eps = float(rng.choice([0.0, 0.05, 0.2]))
        sensor = mp.SensorConfig(depth=depth, epsilon=eps)
        prior = rng.random(100) ** 3 + 1e-3
        prior /= prior.sum()
        state = mp.MosState({"t": (int(rng.integers(10)), int(rng.integers(10)))},
                            mp.RobotPose(int(rng.integers(10)), int(rng.integers(10)), int(rng.integers(8))))
        b = mp.Belief({"t": prior.copy()}, state.robot)
        steps = []
        for _ in range(3):
            a = mp.action_order([])[int(rng.integers(3))]
            state = mp.transition(state, a, g, sensor)
            obs = mp.sensor_observation(state, sensor, rng)
            b = mp.belief_update(b, a, obs, sensor, g)
            r = state.robot
            steps.append(((r.x, r.y, r.heading * 45), obs.as_dict()["t"]))
        ref = brute_bayes(prior, 10, 10, steps, depth, eps)
        worst = max(worst, float(np.max(np.abs(b.hist["t"] - ref))))
    elapsed = time.perf_counter() - t0
    ok = record(3, worst <= 1e-9 and elapsed < 10, f"max error {worst:.2e} over 100 episodes, {elapsed:.2f} s")
    assert ok


# -- 4. gradient check ---------------------------------------------------------------

def test_criterion_4_gradient_check():
    from test_foref import _grad_batch, gradient_check
    t0 = time.perf_counter()
    x, y = _grad_batch()
    errors = gradient_check(ForefModel(seed=3), x, y)
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = record(4, worst <= 1e-3 and elapsed < 60,
                f"worst layer relative error {worst:.2e} ({max(errors, key=errors.get)}), {elapsed:.1f} s")
    assert ok


# -- 5. FoR learning -------------------------------------------------------------------

def test_criterion_5_for_learning():
    t0 = time.perf_counter()
    fs = ForefSettings()
    cities = city_datasets(range(5), "front", fs.districts, fs.annotations_per_landmark, seed=fs.seed)
    cfg = TrainConfig(learning_rate=fs.learning_rate, batch_size=fs.batch_size, max_epochs=fs.max_epochs,
                      patience=fs.patience, augment=True, seed=fs.seed)
    rows = evaluate_crossval(cities, "front", cfg)
    elapsed = time.perf_counter() - t0
    # annotator-disagreement reference: a second, independent oracle pass over the held-out cities
    rng = np.random.default_rng(99)
    floors = []
    for city in cities:
        anns = []
        for gmap, first in city:
            for a in first:
                anns += [a, Annotation(a.map, a.ground, a.kind, synth_annotate(gmap, a.ground, "front", rng))]
        floors.append(noise_floor(anns))
    for r, f in zip(rows, floors):
        print(f"{r['city']}: EGO_CTX {r['EGO_CTX']:.3f} CTX {r['CTX']:.3f} EGO {r['EGO']:.3f} "
              f"Random {r['Random']:.3f} NoiseFloor {f:.3f}")
    ego_ctx = [r["EGO_CTX"] for r in rows]
    below = all(v < 0.8 for v in ego_ctx)
    beats_random = all(r["EGO_CTX"] < r["Random"] for r in rows)
    random_ok = all(abs(r["Random"] - math.pi / 2) <= 0.05 for r in rows)
    context_helps = np.mean([r["EGO"] for r in rows]) >= np.mean(ego_ctx)
    ok = record(5, below and beats_random and random_ok and context_helps and elapsed < 1800,
                f"EGO_CTX per split {[round(v, 3) for v in ego_ctx]}, "
                f"mean EGO {np.mean([r['EGO'] for r in rows]):.3f}, "
                f"Random {[round(r['Random'], 3) for r in rows]}, {elapsed / 60:.1f} min")
    assert ok


# -- 6. planner sanity ------------------------------------------------------------------

TINY = [((7, 1), (0, 0, 0), (3, 0)), ((7, 1), (0, 0, 0), (5, 0)), ((7, 7), (3, 3, 0), (3, 5)),
        ((7, 7), (3, 3, 0), (3, 1)), ((5, 5), (2, 2, 0), (4, 4)), ((6, 6), (1, 1, 2), (4, 4))]


def test_criterion_6_planner_sanity():
    t0 = time.perf_counter()
    rates = []
    for size, robot, target in TINY:
        g = GridMap.from_landmarks("tiny", *size, [])
        model = MosModel(g, mp.SensorConfig(), ("t",))
        _, best = best_first_actions(robot, target, size[0], size[1], 3, horizon=5)
        best = {"Detect(t)" if a == "Detect" else a for a in best}
        h = np.zeros(g.n_cells)
        h[g.index(*target)] = 1.0
        b = mp.Belief({"t": h}, mp.RobotPose(*robot))
        hits = sum(str(plan(b, model, PlannerConfig(), np.random.default_rng(s))[0]) in best
                   for s in range(50))
        rates.append(hits / 50)
    elapsed = time.perf_counter() - t0
    ok = record(6, min(rates) >= 0.9 and elapsed < 60,
                f"optimal first action rates {rates}, {elapsed:.1f} s")
    assert ok


# -- 7. end-to-end ordering ----------------------------------------------------------------

def _curve_margin(report, depth):
    s = np.array(report.summary("slu", depth).curve)
    k = np.array(report.summary("keyword", depth).curve)
    return float(np.mean(s >= k)), float(np.mean(s - k))


def test_criterion_7_end_to_end(tmp_path):
    t0 = time.perf_counter()
    cfg = SuiteConfig(depths=(3, 5))
    results, report = run_suite(cfg, tmp_path / "suite")
    elapsed = time.perf_counter() - t0
    means = {b: report.summary(b, 3).mean for b in ("informed", "slu", "keyword", "uniform")}
    ordered = means["informed"] > means["slu"] > means["keyword"] > means["uniform"]
    gap, lo, hi = report.gaps[("slu", "keyword", 3)]
    dom3, margin3 = _curve_margin(report, 3)
    dom5, margin5 = _curve_margin(report, 5)
    print((tmp_path / "suite" / "summary.txt").read_text())
    ok = record(7, ordered and lo > 0 and dom3 >= 0.9 and margin5 < margin3 and elapsed < 7200,
                f"depth-3 means {{{', '.join(f'{k}: {v:.1f}' for k, v in means.items())}}}, "
                f"slu-keyword {gap:.1f} [{lo:.1f}, {hi:.1f}], curve dominance {dom3:.3f}, "
                f"curve margin d3 {margin3:.2f} vs d5 {margin5:.2f}, {elapsed / 60:.1f} min")
    assert not report.failures
    assert ok


# -- 8. parser --------------------------------------------------------------------------------

def test_criterion_8_parser():
    targets = load_targets(DATA_DIR / "targets.json")
    example = load_map(DATA_DIR / "example_map.json")
    parsed = extract_tuples("The red car is behind Belmont, near Hi-Lo.", example, targets).tuples
    example_ok = parsed == {SpatialTuple("RedCar", "behind", "Belmont"), SpatialTuple("RedCar", "near", "HiLo")}
    total = exact = 0
    rng = np.random.default_rng(8)
    relations = sorted(LEXICON)
    for seed in range(5):
        g = generate_city(seed)
        ids = sorted(g.landmarks)
        for tid, phrases in sorted(DEFAULT_TARGETS.items()):
            for rel in relations:
                for phrase in phrases:
                    k = int(rng.integers(1, 3))
                    picks = [ids[i] for i in rng.choice(len(ids), size=k, replace=False)]
                    rels = [rel] + [relations[int(rng.integers(len(relations)))] for _ in picks[1:]]
                    lms = [g.landmarks[p] for p in picks]
                    sentence = render_canonical(phrase, [(r, lm.synonyms[int(rng.integers(len(lm.synonyms)))])
                                                         for r, lm in zip(rels, lms)])
                    want = {SpatialTuple(tid, r, p) for r, p in zip(rels, picks)}
                    total += 1
                    exact += extract_tuples(sentence, g, DEFAULT_TARGETS).tuples == want
    tp = fp = fn = 0
    for line in (DATA_DIR / "freeform_corpus.jsonl").read_text(encoding="utf-8").splitlines():
        d = json.loads(line)
        got = {(t.figure, t.relation, t.ground) for t in extract_tuples(d["text"], example, targets).tuples}
        gold = {tuple(x) for x in d["gold_tuples"]}
        tp, fp, fn = tp + len(got & gold), fp + len(got - gold), fn + len(gold - got)
    ok = record(8, example_ok and exact == total,
                f"canonical {exact}/{total} exact, example sentence {'ok' if example_ok else 'wrong'}; "
                f"free-form precision {tp / (tp + fp):.3f} recall {tp / (tp + fn):.3f} (reported only)")
    assert ok


# -- 9. reproducibility ---------------------------------------------------------------------

def test_criterion_9_reproducible_bench(tmp_path):
    from citysearch.cli import main
    suite = {"cities": 2, "descriptions_per_city": 3, "depths": [3], "for_source": "oracle",
             "max_steps": 40, "simulations": 300, "seed": 5}
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(suite))
    codes = [main(["bench", str(path), "--out", str(tmp_path / name)]) for name in ("a", "b")]
    same = (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    ok = record(9, codes == [0, 0] and same, f"exit codes {codes}, results.csv identical: {same}")
    assert ok
