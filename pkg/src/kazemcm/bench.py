"""End-to-end experiment execution.

`run_benchmark` reproduces the paper-style accuracy grid: for each
training-set size x feature set {sift, kaze, fused} x classifier
{mcm, svm}, build codebooks from the training split only, encode,
train one-vs-one, and score test accuracy. `run_kos_experiment`
produces the top-N% MKOS curves for both detectors.
"""

from dataclasses import dataclass, field
from pathlib import Path
import csv
import logging
import time

import numpy as np

from .bovw import build_codebook, encode, fuse
from .cache import CacheHandle, extract_and_cache
from .classify import LabeledSet, predict_ovo, support_count, train_ovo
from .config import RunConfig
from .dataset import DatasetManifest, load_dataset, load_image, make_split
from .keypoints import detect_kaze, detect_sift, top_responses
from .kosmetrics import mkos_curve
from .scalespace import build_gaussian_scalespace, build_nonlinear_scalespace

FEATURE_SETS = ("sift", "kaze", "fused")
CLASSIFIERS = ("mcm", "svm")

REPORT_COLUMNS = (
    "feature_set,classifier,n_train,accuracy,support_vectors_total,train_seconds,test_seconds"
)
CURVE_COLUMNS = "n_percent,mkos,detector,mode,beta"

logger = logging.getLogger(__name__)


class BenchmarkError(RuntimeError):
    pass


@dataclass
class ReportCell:
    feature_set: str
    classifier: str
    n_train: int
    accuracy: float
    support_vectors_total: int
    train_seconds: float
    test_seconds: float
    confusion: dict  # (true class, predicted class) -> count
    error: str = ""


@dataclass
class Report:
    cells: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(REPORT_COLUMNS.split(","))
            for c in self.cells:
                w.writerow(
                    [
                        c.feature_set,
                        c.classifier,
                        c.n_train,
                        f"{c.accuracy:.6f}",
                        c.support_vectors_total,
                        f"{c.train_seconds:.3f}",
                        f"{c.test_seconds:.3f}",
                    ]
                )


def accuracy(predictions, truth) -> float:
    """Fraction of matching entries."""
    if len(predictions) != len(truth):
        raise ValueError("predictions and truth must have equal length")
    if not predictions:
        raise ValueError("accuracy of an empty list is undefined")
    return sum(1 for p, t in zip(predictions, truth) if p == t) / len(predictions)


def _gather_descriptors(handle: CacheHandle, ids):
    """image_id -> (sift descriptors, kaze descriptors), skipping
    excluded images."""
    out = {}
    for image_id in ids:
        if image_id in handle.records:
            _, _, sift_descs, kaze_descs = handle.load(image_id)
            out[image_id] = (sift_descs, kaze_descs)
    return out


def _pool_training_descriptors(per_image, kind_index, limit, rng):
    pool = []
    for image_id in sorted(per_image):
        pool.extend(d.values for d in per_image[image_id][kind_index])
    if not pool:
        return np.zeros((0, 0))
    mat = np.stack(pool)
    if mat.shape[0] > limit:
        keep = rng.choice(mat.shape[0], size=limit, replace=False)
        mat = mat[np.sort(keep)]
    return mat


def _feature_vector(feature_set, sift_hist, kaze_hist, w):
    if feature_set == "sift":
        return sift_hist.values
    if feature_set == "kaze":
        return kaze_hist.values
    return fuse(sift_hist, kaze_hist, w).values


def run_benchmark(cfg: RunConfig, manifest: DatasetManifest = None) -> Report:
    if manifest is None:
        manifest = load_dataset(cfg.dataset_root, cfg.layout)
    if len(manifest.classes) < 2:
        raise BenchmarkError("classification needs at least 2 classes")
    handle = extract_and_cache(manifest, cfg)
    report = Report(excluded=list(handle.excluded), config=cfg.to_dict())

    class_of = {}
    for cls, paths in manifest.classes:
        for p in paths:
            class_of[p.stem] = cls

    for n_train in cfg.n_train_grid:
        split = make_split(manifest, n_train, cfg.seed, cfg.test_cap)
        train_ids = [i for cls in sorted(split.train_ids) for i in split.train_ids[cls]]
        test_ids = [i for cls in sorted(split.test_ids) for i in split.test_ids[cls]]
        train_descs = _gather_descriptors(handle, train_ids)
        test_descs = _gather_descriptors(handle, test_ids)

        # codebooks from training descriptors only (no test leakage)
        rng = np.random.default_rng(cfg.seed)
        codebooks = {}
        for kind_index, kind, k in ((0, "sift", cfg.vocab_size_sift), (1, "kaze", cfg.vocab_size_kaze)):
            mat = _pool_training_descriptors(
                train_descs, kind_index, cfg.max_codebook_descriptors, rng
            )
            if mat.shape[0] < k:
                k = max(2, mat.shape[0])
            cb = build_codebook(mat, k=k, seed=cfg.seed, max_iters=cfg.kmeans_max_iters)
            codebooks[kind] = type(cb)(centroids=cb.centroids, kind=kind, seed=cb.seed, inertia=cb.inertia)

        def encode_all(descs):
            feats = {}
            for image_id, (s, z) in descs.items():
                feats[image_id] = (encode(s, codebooks["sift"]), encode(z, codebooks["kaze"]))
            return feats

        train_feats = encode_all(train_descs)
        test_feats = encode_all(test_descs)

        for feature_set in FEATURE_SETS:
            Xtr = np.stack(
                [
                    _feature_vector(feature_set, *train_feats[i], cfg.fusion_weight)
                    for i in train_ids
                    if i in train_feats
                ]
            )
            ytr = [class_of[i] for i in train_ids if i in train_feats]
            Xte = np.stack(
                [
                    _feature_vector(feature_set, *test_feats[i], cfg.fusion_weight)
                    for i in test_ids
                    if i in test_feats
                ]
            )
            yte = [class_of[i] for i in test_ids if i in test_feats]
            for classifier in CLASSIFIERS:
                try:
                    t0 = time.perf_counter()
                    ensemble = train_ovo(
                        LabeledSet(vectors=Xtr, labels=ytr), trainer=classifier, C=cfg.classifier_c
                    )
                    t1 = time.perf_counter()
                    preds = [predict_ovo(ensemble, x) for x in Xte]
                    t2 = time.perf_counter()
                    confusion = {}
                    for p, t in zip(preds, yte):
                        confusion[(t, p)] = confusion.get((t, p), 0) + 1
                    report.cells.append(
                        ReportCell(
                            feature_set=feature_set,
                            classifier=classifier,
                            n_train=n_train,
                            accuracy=accuracy(preds, yte),
                            support_vectors_total=sum(
                                support_count(m) for m in ensemble.models.values()
                            ),
                            train_seconds=t1 - t0,
                            test_seconds=t2 - t1,
                            confusion=confusion,
                        )
                    )
                except Exception as e:  # isolate per-cell failures
                    logger.warning("cell (%s, %s, %d) failed: %s", feature_set, classifier, n_train, e)
                    report.cells.append(
                        ReportCell(
                            feature_set=feature_set,
                            classifier=classifier,
                            n_train=n_train,
                            accuracy=float("nan"),
                            support_vectors_total=0,
                            train_seconds=0.0,
                            test_seconds=0.0,
                            confusion={},
                            error=str(e),
                        )
                    )
    return report


def run_kos_experiment(cfg: RunConfig, manifest: DatasetManifest = None):
    """Top-N% MKOS curves for both detectors in full-box and band modes.

    Returns {(detector, mode): [(n_percent, mkos)]} and writes one CSV
    row per curve point via `write_curves`.
    """
    if manifest is None:
        manifest = load_dataset(cfg.dataset_root, cfg.layout)
    annotated = {i: a for i, a in manifest.annotations.items()}
    if not annotated:
        raise BenchmarkError("kos experiment needs an annotated dataset")

    datasets = {"sift": [], "kaze": []}
    for cls, paths in manifest.classes:
        for p in paths:
            if p.stem not in annotated:
                continue
            img = load_image(p)
            gss = build_gaussian_scalespace(
                img, cfg.gaussian_octaves, cfg.gaussian_sublevels, cfg.gaussian_base_sigma
            )
            nss = build_nonlinear_scalespace(img, cfg.diffusion_params())
            ann = annotated[p.stem]
            datasets["sift"].append((ann, detect_sift(gss, cfg.sift_contrast_threshold, cfg.sift_edge_ratio)))
            datasets["kaze"].append((ann, detect_kaze(nss, cfg.kaze_threshold)))

    curves = {}
    for detector in ("sift", "kaze"):
        for mode in ("full_box", "band"):
            points, skipped = mkos_curve(datasets[detector], cfg.n_grid, mode=mode, beta=cfg.beta)
            if skipped:
                logger.warning("%s/%s: skipped %d images without keypoints", detector, mode, skipped)
            curves[(detector, mode)] = points
    return curves


def write_curves(curves, path, beta: float):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CURVE_COLUMNS.split(","))
        for (detector, mode), points in sorted(curves.items()):
            for n, score in points:
                w.writerow([n, f"{score:.6f}", detector, mode, f"{beta:.3f}" if mode == "band" else ""])
