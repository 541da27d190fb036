"""Run configuration: every tunable of the pipeline in one JSON document.

Unknown keys are rejected so a typo can't silently fall back to a
default. The stable config hash namespaces descriptor caches.
"""

from dataclasses import dataclass, field, asdict, fields
import hashlib
import json
from pathlib import Path

from .scalespace import DiffusionParams


@dataclass
class RunConfig:
    # dataset
    dataset_root: str = "."
    layout: str = "class_folders"
    # nonlinear diffusion
    conductivity_kind: str = "pm_g2"
    k_percentile: float = 70.0
    gradient_presmooth_sigma: float = 1.0
    step_tau: float = 0.2
    nonlinear_octaves: int = 3
    nonlinear_sublevels: int = 3
    nonlinear_base_sigma: float = 1.6
    # gaussian scale space
    gaussian_octaves: int = 3
    gaussian_sublevels: int = 3
    gaussian_base_sigma: float = 1.6
    # detectors
    kaze_threshold: float = 0.001
    sift_contrast_threshold: float = 0.03
    sift_edge_ratio: float = 10.0
    top_n_percent: float = 100.0
    max_keypoints_per_image: int = 300
    # bovw
    vocab_size_sift: int = 256
    vocab_size_kaze: int = 256
    fusion_weight: float = 0.5
    max_codebook_descriptors: int = 200_000
    kmeans_max_iters: int = 100
    # classifiers
    classifier_c: float = 1.0
    # protocol
    n_train_grid: list = field(default_factory=lambda: [15, 30, 45, 60])
    test_cap: int = 25
    seed: int = 0
    # kos experiment
    beta: float = 0.1
    n_grid: list = field(default_factory=lambda: list(range(10, 101, 10)))
    # plumbing
    cache_dir: str = "cache"
    out_dir: str = "out"

    def __post_init__(self):
        # delegate range validation of the diffusion block
        self.diffusion_params()
        if not 0.0 < self.top_n_percent <= 100.0:
            raise ValueError("top_n_percent must be in (0, 100]")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ValueError("fusion_weight must be in [0, 1]")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must be in (0, 1)")
        if self.classifier_c <= 0:
            raise ValueError("classifier_c must be > 0")
        if self.vocab_size_sift < 2 or self.vocab_size_kaze < 2:
            raise ValueError("vocabulary sizes must be >= 2")
        if any(n < 1 for n in self.n_train_grid):
            raise ValueError("n_train values must be >= 1")
        if self.sift_edge_ratio <= 0:
            raise ValueError("sift_edge_ratio must be > 0")

    def diffusion_params(self) -> DiffusionParams:
        return DiffusionParams(
            conductivity_kind=self.conductivity_kind,
            k_percentile=self.k_percentile,
            gradient_presmooth_sigma=self.gradient_presmooth_sigma,
            step_tau=self.step_tau,
            octaves=self.nonlinear_octaves,
            sublevels_per_octave=self.nonlinear_sublevels,
            base_sigma=self.nonlinear_base_sigma,
        )

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        doc = json.loads(Path(path).read_text())
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def feature_hash(self) -> int:
        """64-bit hash over the keys that affect extraction output only,
        so classifier sweeps reuse the descriptor cache."""
        keys = [
            "conductivity_kind",
            "k_percentile",
            "gradient_presmooth_sigma",
            "step_tau",
            "nonlinear_octaves",
            "nonlinear_sublevels",
            "nonlinear_base_sigma",
            "gaussian_octaves",
            "gaussian_sublevels",
            "gaussian_base_sigma",
            "kaze_threshold",
            "sift_contrast_threshold",
            "sift_edge_ratio",
            "max_keypoints_per_image",
        ]
        doc = {k: getattr(self, k) for k in keys}
        blob = json.dumps(doc, sort_keys=True).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
