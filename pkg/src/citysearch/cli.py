"""Command line entry point: ``citysearch <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3


def _targets(path):
    from .harness.generate import DEFAULT_TARGETS
    from .langparse import load_targets
    return load_targets(path) if path else dict(DEFAULT_TARGETS)


def cmd_map_generate(args):
    from .gridmap import save_map
    from .harness.generate import generate_city
    gmap = generate_city(args.seed, args.width, args.height, name=args.name)
    if args.out:
        save_map(gmap, args.out)
    else:
        print(gmap.to_json())
    return EXIT_OK


def cmd_map_validate(args):
    from .gridmap import load_map
    gmap = load_map(args.path)
    print(f"{gmap.name}: {gmap.width}x{gmap.height}, {len(gmap.buildings())} buildings, "
          f"{len(gmap.streets())} streets")
    return EXIT_OK


def cmd_parse(args):
    from .gridmap import load_map
    from .langparse import extract_tuples
    obs = extract_tuples(args.text, load_map(args.map), _targets(args.targets))
    print(json.dumps([[t.figure, t.relation, t.ground] for t in sorted(obs.tuples)]))
    return EXIT_OK


def _load_models(front, left):
    from .foref.net import ForefModel
    models = {}
    if front:
        models["front"] = ForefModel.load(front)
    if left:
        models["left"] = ForefModel.load(left)
    return models


def cmd_belief(args):
    from .gridmap import load_map
    from .harness.plots import plot_field
    from .harness.report import field_csv
    from .harness.trials import model_for_provider
    from .langparse import extract_tuples
    from .spatial_model import SpatialModelConfig, language_likelihood_field
    gmap = load_map(args.map)
    obs = extract_tuples(args.language, gmap, _targets(args.targets))
    provider = model_for_provider(gmap, _load_models(args.front_model, args.left_model))
    config = SpatialModelConfig(dot_mode=args.dot_mode, mixture_weight=args.mixture)
    figures = [args.target] if args.target else obs.figures()
    if not figures:
        print("no grounded spatial relation found", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for fig in figures:
        field = language_likelihood_field(obs.for_figure(fig), gmap, provider, config)
        stem = out.parent / f"{out.name}_{fig}" if len(figures) > 1 else out
        Path(f"{stem}.csv").write_text(field_csv(field, gmap.width), encoding="utf-8")
        plot_field(field, gmap, f"{stem}.svg", title=f"{fig}: {args.language}")
        print(f"{fig}: wrote {stem}.csv, {stem}.svg")
    return EXIT_OK


def _synthetic_cities(args, kind):
    from .foref.train import city_datasets
    seeds = [args.city_seed + i for i in range(args.cities)]
    return city_datasets(seeds, kind, args.districts, args.annotations, seed=args.seed)


def _train_config(args, kind):
    from .foref.train import TrainConfig
    return TrainConfig(learning_rate=args.lr, max_epochs=args.epochs, patience=args.patience,
                       batch_size=args.batch_size, augment=(kind == "front"), seed=args.seed)


def cmd_foref_train(args):
    from .foref.train import train_on_cities
    cities = _synthetic_cities(args, args.kind)
    model, hist = train_on_cities([d for c in cities for d in c], args.kind, "EGO_CTX",
                                  _train_config(args, args.kind))
    model.save(args.out, {"variant": args.kind, "epochs": hist.stopped_epoch,
                          "val_loss": min(hist.val_loss), "seed": args.seed})
    print(f"saved {args.out} (best epoch {hist.best_epoch}, val loss {min(hist.val_loss):.4f})")
    return EXIT_OK


def cmd_foref_eval(args):
    from .foref.train import evaluate_crossval
    cities = _synthetic_cities(args, args.kind)
    rows = evaluate_crossval(cities, args.kind, _train_config(args, args.kind), seed=args.seed)
    cols = ["EGO_CTX", "CTX", "EGO", "Random", "NoiseFloor"]
    print(f"{'city':<10}" + "".join(f"{c:>11}" for c in cols))
    for r in rows:
        print(f"{r['city']:<10}" + "".join(f"{r[c]:>11.3f}" for c in cols))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_foref_predict(args):
    from .foref.net import ForefModel
    from .foref.train import predict_for
    from .gridmap import load_map
    model = ForefModel.load(args.model)
    relation = "front" if model.variant == "front" else "left"
    frame = predict_for({model.variant: model}, load_map(args.map), args.ground, relation)
    print(json.dumps({"ground": args.ground, "variant": model.variant,
                      "origin": [frame.origin.x, frame.origin.y], "theta": frame.theta,
                      "degrees": math.degrees(frame.theta)}))
    return EXIT_OK


def cmd_search_run(args):
    from .harness.trials import run_trial, trial_from_json
    path = Path(args.trial)
    cfg = trial_from_json(json.loads(path.read_text(encoding="utf-8")), path.parent)
    diag = open(args.diagnostics, "w", encoding="utf-8") if args.diagnostics else None
    try:
        res = run_trial(cfg, diagnostics=diag)
    finally:
        if diag:
            diag.close()
    print(json.dumps({"trial_id": res.trial_id, "baseline": res.baseline, "depth": res.depth,
                      "steps": res.steps, "success": res.success,
                      "discounted_reward": res.discounted_reward, "tuples": res.tuples}))
    return EXIT_OK


def cmd_bench(args):
    from .harness.report import format_table
    from .harness.suite import SuiteConfig, run_suite
    path = Path(args.suite)
    data = json.loads(path.read_text(encoding="utf-8"))
    out = args.out or data.get("out_dir") or "bench_out"
    cfg = SuiteConfig.from_dict(data)
    results, report = run_suite(cfg, out)
    print(format_table(report))
    print(f"wrote {out}/results.csv, {out}/curves.svg")
    return EXIT_PARTIAL if report.failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citysearch", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("map", help="generate or validate map files")
    msub = m.add_subparsers(dest="map_command", required=True)
    g = msub.add_parser("generate")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--width", type=int, default=41)
    g.add_argument("--height", type=int, default=41)
    g.add_argument("--name")
    g.add_argument("--out")
    g.set_defaults(func=cmd_map_generate)
    v = msub.add_parser("validate")
    v.add_argument("path")
    v.set_defaults(func=cmd_map_validate)

    pa = sub.add_parser("parse", help="extract spatial tuples from a sentence")
    pa.add_argument("text")
    pa.add_argument("--map", required=True)
    pa.add_argument("--targets", help="target vocabulary JSON")
    pa.set_defaults(func=cmd_parse)

    b = sub.add_parser("belief", help="write the language likelihood field as CSV + SVG")
    b.add_argument("--map", required=True)
    b.add_argument("--language", required=True)
    b.add_argument("--out", required=True, help="output path prefix")
    b.add_argument("--targets")
    b.add_argument("--target")
    b.add_argument("--front-model")
    b.add_argument("--left-model")
    b.add_argument("--dot-mode", choices=("rectified", "abs"), default="rectified")
    b.add_argument("--mixture", type=float, default=0.9)
    b.set_defaults(func=cmd_belief)

    f = sub.add_parser("foref", help="frame-of-reference models")
    fsub = f.add_subparsers(dest="foref_command", required=True)
    for name, func in (("train", cmd_foref_train), ("eval", cmd_foref_eval)):
        fp = fsub.add_parser(name)
        fp.add_argument("--kind", choices=("front", "left"), default="front")
        fp.add_argument("--cities", type=int, default=5)
        fp.add_argument("--city-seed", type=int, default=0)
        fp.add_argument("--districts", type=int, default=8)
        fp.add_argument("--annotations", type=int, default=1)
        fp.add_argument("--lr", type=float, default=1e-3)
        fp.add_argument("--epochs", type=int, default=400)
        fp.add_argument("--patience", type=int, default=20)
        fp.add_argument("--batch-size", type=int, default=32)
        fp.add_argument("--seed", type=int, default=0)
        fp.add_argument("--out", required=(name == "train"))
        fp.set_defaults(func=func)
    fp = fsub.add_parser("predict")
    fp.add_argument("--model", required=True)
    fp.add_argument("--map", required=True)
    fp.add_argument("--ground", required=True)
    fp.set_defaults(func=cmd_foref_predict)

    s = sub.add_parser("search", help="run a single search trial")
    ssub = s.add_subparsers(dest="search_command", required=True)
    r = ssub.add_parser("run")
    r.add_argument("trial")
    r.add_argument("--diagnostics", help="write per-step planner JSON lines here")
    r.set_defaults(func=cmd_search_run)

    be = sub.add_parser("bench", help="run a benchmark suite")
    be.add_argument("suite")
    be.add_argument("--out")
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    from .gridmap import MapError
    from .harness.trials import ConfigError
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MapError, FileNotFoundError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
