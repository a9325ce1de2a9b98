"""Command-line entry point: ``shapemate <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .autodiff.optim import TrainingDivergedError
from .bvh import build_bvh
from .cutting import FAMILIES, NoValidCutError, ThinShellError, make_pair
from .dataset import (
    DatasetError, DatasetManifest, SplitSpec, dataset_stats, entry_for, load_manifest, make_splits, save_manifest,
    write_pair,
)
from .experiments import BASELINES, KINDS, evaluate_baseline, run_experiment
from .mesh import BUNDLED, MeshError, bundled_mesh, load_mesh, normalize_mesh
from .metrics import write_csv
from .trainer import TrainConfig, Trainer, evaluate_model, load_generator, load_pairs

log = logging.getLogger("shapemate")


def _families(text: str) -> list[str]:
    fams = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fams if f not in FAMILIES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown cut families {bad}; choose from {FAMILIES}")
    return fams


def _mesh_source(spec: str):
    """A bundled primitive name or a path to an .off/.stl file."""
    if spec in BUNDLED:
        return spec, bundled_mesh(spec)
    path = Path(spec)
    return path.stem, load_mesh(path)


def cmd_generate(args) -> int:
    out = Path(args.out)
    manifest = load_manifest(out) if (out / "manifest.json").exists() else DatasetManifest()
    existing = set(manifest.ids())
    n_written = n_skipped = 0
    for k, spec in enumerate(args.meshes):
        name, mesh = _mesh_source(spec)
        mesh = normalize_mesh(mesh)
        bvh = build_bvh(mesh)
        category = args.category or name
        for fi, family in enumerate(args.families):
            for j in range(args.per_mesh):
                seed = args.seed + (k * len(FAMILIES) + fi) * args.per_mesh + j
                meta = {"category": category, "mesh_id": name}
                try:
                    rec = make_pair(mesh, family, seed, args.shape_type, bvh=bvh, n_dense=args.n_dense,
                                    n_sdf=args.n_sdf, meta=meta)
                except (NoValidCutError, ThinShellError) as exc:
                    log.warning("skipping %s/%s seed %d: %s", name, family, seed, exc)
                    n_skipped += 1
                    continue
                pair_id = write_pair(rec, out)
                if pair_id not in existing:
                    manifest.add(entry_for(rec, pair_id))
                    existing.add(pair_id)
                n_written += 1
    save_manifest(manifest, out)
    print(json.dumps({"written": n_written, "skipped": n_skipped, "total": len(manifest.pairs)}))
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(args.data)
    spec = SplitSpec(tuple(args.fractions), args.seed, args.mode)
    manifest = make_splits(manifest, spec)
    save_manifest(manifest, args.data)
    print(json.dumps(dataset_stats(manifest).get("splits", {})))
    return 0


def cmd_stats(args) -> int:
    print(json.dumps(dataset_stats(load_manifest(args.data)), indent=1))
    return 0


def cmd_train(args) -> int:
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = TrainConfig.from_json({**config.__dict__, "seed": args.seed})
    if args.noise_sigma is not None:
        config = TrainConfig.from_json({**config.__dict__, "noise_sigma": args.noise_sigma})
    train = load_pairs(args.data, "train")
    val = load_pairs(args.data, "val")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        trainer = Trainer.resume(args.resume, train, val, out)
    else:
        trainer = Trainer(train, config, val, out)
    (out / "config.json").write_text(json.dumps(trainer.config.__dict__, indent=1))
    trainer.fit()
    print(json.dumps({"steps": trainer.step, "best_val_MAE_R": trainer.best_val, "out": str(out)}))
    return 0


def cmd_eval(args) -> int:
    if args.experiment:
        rows = run_experiment(args.experiment, args.data, ("nsm",), checkpoint=args.checkpoint, seed=args.seed or 0)
    else:
        net, cfg = load_generator(args.checkpoint)
        pairs = load_pairs(args.data, "test")
        sigma = args.noise_sigma or 0.0
        rows = [evaluate_model(net, pairs, args.seed or 0, cfg.points_per_part, noise_sigma=sigma, method="nsm",
                               experiment="test")]
    _emit(rows, args.out)
    return 0


def cmd_baseline(args) -> int:
    rows = []
    for method in args.method:
        if args.experiment:
            rows += run_experiment(args.experiment, args.data, (method,), seed=args.seed or 0)
        else:
            pairs = load_pairs(args.data, "test")
            rows.append(evaluate_baseline(method, pairs, args.seed or 0, args.noise_sigma or 0.0, "test"))
    _emit(rows, args.out)
    return 0


def _emit(rows, out) -> None:
    if out:
        write_csv(rows, out)
    for r in rows:
        print(json.dumps(r.row()))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapemate", description="Two-part shape mating: data, training, evaluation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="cut meshes into part pairs and write a dataset")
    g.add_argument("--meshes", nargs="+", default=list(BUNDLED), help="bundled names or .off/.stl paths")
    g.add_argument("--families", type=_families, default=list(FAMILIES))
    g.add_argument("--shape-type", choices=("solid", "shell"), default="solid")
    g.add_argument("--per-mesh", type=int, default=1, help="pairs per (mesh, family)")
    g.add_argument("--category", default=None, help="category label (default: mesh name)")
    g.add_argument("--n-dense", type=int, default=50_000)
    g.add_argument("--n-sdf", type=int, default=40_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("split", help="assign train/val/test")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=("random", "unseen-category", "unseen-cut"), default="random")
    s.add_argument("--fractions", type=float, nargs=3, default=(0.8, 0.1, 0.1))
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_split)

    t = sub.add_parser("train", help="train the mating network")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None, help="JSON training config")
    t.add_argument("--out", required=True)
    t.add_argument("--resume", default=None, help="checkpoint stem to continue from")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--noise-sigma", type=float, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--experiment", choices=KINDS, default=None)
    e.add_argument("--noise-sigma", type=float, default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", default=None, help="CSV path")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline", help="evaluate registration baselines")
    b.add_argument("--data", required=True)
    b.add_argument("--method", nargs="+", choices=BASELINES, default=["icp-point"])
    b.add_argument("--experiment", choices=KINDS, default=None)
    b.add_argument("--noise-sigma", type=float, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", default=None, help="CSV path")
    b.set_defaults(fn=cmd_baseline)

    st = sub.add_parser("stats", help="dataset counts")
    st.add_argument("--data", required=True)
    st.set_defaults(fn=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ValueError, KeyError, DatasetError, MeshError, FileNotFoundError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
