"""Command-line entry point wiring generation, training, evaluation and
diagnostics into reproducible experiments.

Exit codes: 0 success, 1 check failure, 2 config error, 3 numeric failure,
4 I/O error. Errors print one machine-parsable line to stderr:
``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config, serialize_config
from .dataset import dataset_read, dataset_write
from .datagen import generate_scenes
from .errors import Error
from .gradcheck import gradient_check_suite
from .graph import build_receptive_field
from .head import train, write_trace_csv
from .metrics import evaluate
from .optim import load_checkpoint, save_checkpoint
from .priorcheck import run_prior_checks
from .render import apply_occlusion

SWEEPS = {
    "neighbors": ("net.k", [10, 15, 20, 30]),
    "alpha1": ("net.alpha1", [0.6, 0.7, 0.8, 0.9]),
    "occlusion": ("eval.occlusion", [0.1, 0.25, 0.4]),
}


def _workers() -> int:
    raw = os.environ.get("THEPOSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise Error("config", f"THEPOSE_THREADS={raw!r} is not an integer")


def _occlusion_seed(seed_eval: int, index: int) -> int:
    return int(np.random.SeedSequence([seed_eval, 7919, index])
               .generate_state(1)[0])


def _occlude_all(samples, fraction, seed_eval):
    if fraction <= 0.0:
        return samples
    return [apply_occlusion(s, fraction, _occlusion_seed(seed_eval, i))
            for i, s in enumerate(samples)]


def _generate_split(cfg, scenes_per_category, seed):
    samples = []
    for category in cfg.categories:
        samples.extend(generate_scenes(category, scenes_per_category,
                                       cfg.n_points, cfg.intrinsics(), seed,
                                       workers=_workers()))
    return samples


def cmd_gen(args):
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = _generate_split(cfg, cfg.train_scenes, cfg.seed_data)
    test_set = _generate_split(cfg, cfg.test_scenes, cfg.seed_data + 1)
    dataset_write(train_set, out / "train.thepose")
    dataset_write(test_set, out / "test.thepose")
    for category in cfg.categories:
        n_tr = sum(1 for s in train_set if s.category == category)
        n_te = sum(1 for s in test_set if s.category == category)
        print(f"{category}: train {n_tr}  test {n_te}")
    print(f"wrote {out / 'train.thepose'} and {out / 'test.thepose'}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    samples = dataset_read(args.data)
    store, trace = train(samples, cfg.hgf(), cfg.train_cfg(), cfg.seed_train)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(store, out / "model.ckpt")
    write_trace_csv(trace, out / "loss.csv")
    print(f"final loss {trace[-1][2]:.6f} after {len(trace)} steps")
    print(f"wrote {out / 'model.ckpt'} and {out / 'loss.csv'}")
    return 0


def _run_eval(cfg, samples, store, occlusion):
    samples = _occlude_all(samples, occlusion, cfg.seed_eval)
    report, _ = evaluate(store, samples, cfg.hgf(), n_mc=cfg.n_mc,
                         seed=cfg.seed_eval)
    return report


def cmd_eval(args):
    cfg = load_config(args.config)
    occlusion = cfg.occlusion if args.occlusion is None else args.occlusion
    if not 0.0 <= occlusion < 1.0:
        raise Error("config", "occlusion must be in [0, 1)")
    samples = dataset_read(args.data)
    store = load_checkpoint(args.ckpt)
    report = _run_eval(cfg, samples, store, occlusion)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_table() + "\n")
    print(report.to_table())
    print(f"wrote {out / 'report.json'}")
    return 0


def cmd_check_prior(args):
    cfg = load_config(args.config)
    reports = run_prior_checks(cfg.categories, cfg.seed_data)
    ok = True
    for r in reports:
        print(r.line())
        ok = ok and r.passed
    return 0 if ok else 1


def cmd_dump_graph(args):
    samples = dataset_read(args.data)
    if not 0 <= args.sample < len(samples):
        raise Error("config", f"sample index {args.sample} out of range")
    s = samples[args.sample]
    graph = build_receptive_field(s.embeddings.astype(np.float64),
                                  s.cloud.astype(np.float64),
                                  k=args.k, alpha=args.alpha)
    print(graph.to_json())
    return 0


def cmd_grad_check(args):
    cfg = load_config(args.config)
    errors = gradient_check_suite(seed=cfg.seed_train)
    worst = 0.0
    for layer in sorted(errors):
        print(f"{layer:12s} max rel err {errors[layer]:.3e}")
        worst = max(worst, errors[layer])
    if worst >= 1e-4:
        raise Error("diverged", f"gradient check failed at {worst:.3e}")
    return 0


def cmd_ablate(args):
    cfg = load_config(args.config)
    key, values = SWEEPS[args.sweep]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = _generate_split(cfg, cfg.train_scenes, cfg.seed_data)
    test_set = _generate_split(cfg, cfg.test_scenes, cfg.seed_data + 1)
    rows = []
    base_store = None
    for value in values:
        if args.sweep == "occlusion":
            if base_store is None:
                base_store, _ = train(train_set, cfg.hgf(), cfg.train_cfg(),
                                      cfg.seed_train)
            report = _run_eval(cfg, test_set, base_store, value)
        else:
            attr = {"net.k": "k", "net.alpha1": "alpha1"}[key]
            setattr(cfg, attr, type(getattr(cfg, attr))(value))
            cfg.validate()
            store, _ = train(train_set, cfg.hgf(), cfg.train_cfg(),
                             cfg.seed_train)
            report = _run_eval(cfg, test_set, store, cfg.occlusion)
        rows.append({"value": value, "mean": report.mean,
                     "per_category": report.per_category})
        print(f"{key} = {value}: 10d5cm {report.mean['10d5cm']:.1f}  "
              f"5d2cm {report.mean['5d2cm']:.1f}")
    blob = {"sweep": args.sweep, "key": key, "rows": rows,
            "config": serialize_config(cfg)}
    (out / f"ablate_{args.sweep}.json").write_text(json.dumps(blob, indent=2))
    print(f"wrote {out / f'ablate_{args.sweep}.json'}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="thepose",
                                description="synthetic category-level 6D "
                                            "pose pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="train a model on a dataset file")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--occlusion", type=float, default=None)
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("check-prior", help="run the prior property suites")
    c.add_argument("--config", required=True)
    c.set_defaults(fn=cmd_check_prior)

    d = sub.add_parser("dump-graph", help="emit a hybrid graph as JSON")
    d.add_argument("--data", required=True)
    d.add_argument("--sample", type=int, required=True)
    d.add_argument("--alpha", type=float, required=True)
    d.add_argument("--k", type=int, required=True)
    d.set_defaults(fn=cmd_dump_graph)

    r = sub.add_parser("grad-check", help="central-difference checks")
    r.add_argument("--config", required=True)
    r.set_defaults(fn=cmd_grad_check)

    a = sub.add_parser("ablate", help="hyperparameter sweeps")
    a.add_argument("--config", required=True)
    a.add_argument("--sweep", choices=sorted(SWEEPS), required=True)
    a.add_argument("--out", default="ablate-out")
    a.set_defaults(fn=cmd_ablate)
    return p


_EXIT_CODES = {
    "config": 2,
    "bad-magic": 4, "bad-version": 4, "truncated": 4, "io": 4,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Error as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_CODES.get(err.kind, 3)
    except OSError as err:
        print(f"error: io: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
