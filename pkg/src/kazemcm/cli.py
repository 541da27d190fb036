"""Command-line entry point.

Subcommands mirror the pipeline stages: `extract` (descriptor cache),
`kos-curve` (MKOS curves), `codebook`, `encode`, `train`, `bench`
(full accuracy grid), `report` (re-render a saved report).
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from .bench import Report, ReportCell, run_benchmark, run_kos_experiment, write_curves
from .bovw import build_codebook, encode, fuse, load_codebook, save_codebook
from .cache import extract_and_cache, read_record
from .classify import LabeledSet, train_ovo
from .config import RunConfig
from .dataset import load_dataset, make_split


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_json(args.config)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.cache_dir is not None:
        cfg.cache_dir = args.cache_dir
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_extract(args):
    cfg = _load_config(args)
    manifest = load_dataset(cfg.dataset_root, cfg.layout)
    handle = extract_and_cache(manifest, cfg)
    print(f"cached {len(handle.records)} images under {handle.directory}")
    for image_id, reason in handle.excluded:
        print(f"excluded {image_id}: {reason}")


def cmd_kos_curve(args):
    cfg = _load_config(args)
    curves = run_kos_experiment(cfg)
    out = _out_dir(args, cfg) / "kos_curves.csv"
    write_curves(curves, out, cfg.beta)
    print(f"wrote {out}")


def _training_matrices(cfg, feature_set, n_train):
    manifest = load_dataset(cfg.dataset_root, cfg.layout)
    handle = extract_and_cache(manifest, cfg)
    split = make_split(manifest, n_train, cfg.seed, cfg.test_cap)
    return manifest, handle, split


def cmd_codebook(args):
    cfg = _load_config(args)
    manifest, handle, split = _training_matrices(cfg, None, args.n_train)
    out = _out_dir(args, cfg)
    train_ids = [i for cls in sorted(split.train_ids) for i in split.train_ids[cls]]
    rng = np.random.default_rng(cfg.seed)
    for kind_index, kind, k in ((0, "sift", cfg.vocab_size_sift), (1, "kaze", cfg.vocab_size_kaze)):
        pool = []
        for image_id in train_ids:
            if image_id in handle.records:
                rec = handle.load(image_id)
                pool.extend(d.values for d in rec[2 + kind_index])
        mat = np.stack(pool) if pool else np.zeros((0, 0))
        if mat.shape[0] > cfg.max_codebook_descriptors:
            keep = rng.choice(mat.shape[0], size=cfg.max_codebook_descriptors, replace=False)
            mat = mat[np.sort(keep)]
        cb = build_codebook(
            mat, k=min(k, max(2, mat.shape[0])), seed=cfg.seed, max_iters=cfg.kmeans_max_iters
        )
        cb = type(cb)(centroids=cb.centroids, kind=kind, seed=cb.seed, inertia=cb.inertia)
        path = out / f"codebook_{kind}.bvw"
        save_codebook(cb, path)
        print(f"wrote {path} (k={cb.centroids.shape[0]}, inertia={cb.inertia:.3f})")


def cmd_encode(args):
    cfg = _load_config(args)
    manifest = load_dataset(cfg.dataset_root, cfg.layout)
    handle = extract_and_cache(manifest, cfg)
    out = _out_dir(args, cfg)
    cb_sift = load_codebook(Path(args.codebook_dir) / "codebook_sift.bvw")
    cb_kaze = load_codebook(Path(args.codebook_dir) / "codebook_kaze.bvw")
    ids, vectors = [], []
    for image_id in sorted(handle.records):
        _, _, sift_descs, kaze_descs = handle.load(image_id)
        fused = fuse(encode(sift_descs, cb_sift), encode(kaze_descs, cb_kaze), cfg.fusion_weight)
        ids.append(image_id)
        vectors.append(fused.values)
    path = out / "features.npz"
    np.savez(path, image_ids=np.array(ids), vectors=np.stack(vectors))
    print(f"wrote {path} ({len(ids)} images)")


def _model_to_json(pair, m):
    return {
        "kind": m.kind,
        "class_pair": list(pair),
        "u": [float(v) for v in m.u],
        "v": m.v,
        "h": m.h,
        "C": m.C,
        "support_indices": list(m.support_indices),
    }


def cmd_train(args):
    cfg = _load_config(args)
    data = np.load(args.features, allow_pickle=False)
    ids = [str(i) for i in data["image_ids"]]
    vectors = data["vectors"]
    manifest = load_dataset(cfg.dataset_root, cfg.layout)
    class_of = {p.stem: cls for cls, paths in manifest.classes for p in paths}
    split = make_split(manifest, args.n_train, cfg.seed, cfg.test_cap)
    train_set = {i for cls in split.train_ids for i in split.train_ids[cls]}
    keep = [j for j, i in enumerate(ids) if i in train_set]
    labels = [class_of[ids[j]] for j in keep]
    ensemble = train_ovo(
        LabeledSet(vectors=vectors[keep], labels=labels), trainer=args.trainer, C=cfg.classifier_c
    )
    bundle = {
        "classifier": args.trainer,
        "class_ids": ensemble.class_ids,
        "models": [_model_to_json(pair, m) for pair, m in sorted(ensemble.models.items())],
    }
    out = _out_dir(args, cfg) / f"models_{args.trainer}.json"
    out.write_text(json.dumps(bundle, indent=1))
    print(f"wrote {out} ({len(ensemble.models)} pairwise models)")


def cmd_bench(args):
    cfg = _load_config(args)
    report = run_benchmark(cfg)
    out = _out_dir(args, cfg)
    csv_path = out / "report.csv"
    report.write_csv(csv_path)
    json_path = out / "report.json"
    json_path.write_text(
        json.dumps(
            {
                "config": report.config,
                "excluded": report.excluded,
                "cells": [
                    {
                        "feature_set": c.feature_set,
                        "classifier": c.classifier,
                        "n_train": c.n_train,
                        "accuracy": c.accuracy,
                        "support_vectors_total": c.support_vectors_total,
                        "train_seconds": c.train_seconds,
                        "test_seconds": c.test_seconds,
                        "confusion": {f"{t}|{p}": n for (t, p), n in c.confusion.items()},
                        "error": c.error,
                    }
                    for c in report.cells
                ],
            },
            indent=1,
        )
    )
    print(f"wrote {csv_path} and {json_path}")
    _print_report_cells(report.cells)


def _print_report_cells(cells):
    print(f"{'feature_set':<12}{'classifier':<12}{'n_train':<9}{'accuracy':<10}{'sv_total':<10}")
    for c in cells:
        print(f"{c.feature_set:<12}{c.classifier:<12}{c.n_train:<9}{c.accuracy:<10.4f}{c.support_vectors_total:<10}")


def cmd_report(args):
    doc = json.loads(Path(args.report).read_text())
    cells = [
        ReportCell(
            feature_set=c["feature_set"],
            classifier=c["classifier"],
            n_train=c["n_train"],
            accuracy=c["accuracy"],
            support_vectors_total=c["support_vectors_total"],
            train_seconds=c["train_seconds"],
            test_seconds=c["test_seconds"],
            confusion={},
            error=c.get("error", ""),
        )
        for c in doc["cells"]
    ]
    _print_report_cells(cells)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    ap = argparse.ArgumentParser(prog="kazemcm")
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--cache-dir", default=None)
    ap.add_argument("--out", default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("extract").set_defaults(func=cmd_extract)
    sub.add_parser("kos-curve").set_defaults(func=cmd_kos_curve)

    p = sub.add_parser("codebook")
    p.add_argument("--n-train", type=int, default=15)
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("encode")
    p.add_argument("--codebook-dir", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train")
    p.add_argument("--features", required=True)
    p.add_argument("--trainer", choices=("mcm", "svm"), default="mcm")
    p.add_argument("--n-train", type=int, default=15)
    p.set_defaults(func=cmd_train)

    sub.add_parser("bench").set_defaults(func=cmd_bench)

    p = sub.add_parser("report")
    p.add_argument("report", help="path to report.json")
    p.set_defaults(func=cmd_report)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    main()
