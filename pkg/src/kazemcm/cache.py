"""Per-image descriptor cache.

Record layout (little-endian, bit-exact):
    magic "KFC1", u32 version=1, u64 config hash,
    u32 image-id length + UTF-8 id,
    u32 sift keypoint count, u32 kaze keypoint count,
    then per keypoint: f32 x, y, sigma, response, u8 kind,
    u32 descriptor length, descriptor f32s.

Extraction is idempotent: an existing record whose header matches the
current config hash is reused byte-for-byte.
"""

from dataclasses import dataclass, field
from pathlib import Path
import logging
import struct

import numpy as np

from .bovw import KIND_BYTES, BYTE_KINDS
from .config import RunConfig
from .dataset import DatasetManifest, image_id_for, load_image
from .keypoints import Keypoint, Descriptor, describe, detect_kaze, detect_sift, top_responses
from .scalespace import build_gaussian_scalespace, build_nonlinear_scalespace

MAGIC = b"KFC1"
VERSION = 1

logger = logging.getLogger(__name__)


@dataclass
class CacheHandle:
    directory: Path
    config_hash: int
    records: dict = field(default_factory=dict)  # image_id -> path
    excluded: list = field(default_factory=list)  # (image_id, reason)

    def load(self, image_id: str):
        return read_record(self.records[image_id])


def _pack_keypoints(f, descriptors):
    for d in descriptors:
        kp = d.keypoint
        f.write(struct.pack("<ffffB", kp.x, kp.y, kp.sigma, kp.response, KIND_BYTES[kp.kind]))
        vals = np.asarray(d.values, dtype="<f4")
        f.write(struct.pack("<I", vals.size))
        f.write(vals.tobytes())


def write_record(path, image_id: str, config_hash: int, sift_descs, kaze_descs):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, config_hash))
        id_bytes = image_id.encode("utf-8")
        f.write(struct.pack("<I", len(id_bytes)))
        f.write(id_bytes)
        f.write(struct.pack("<II", len(sift_descs), len(kaze_descs)))
        _pack_keypoints(f, sift_descs)
        _pack_keypoints(f, kaze_descs)


def read_record(path):
    """Returns (image_id, config_hash, sift descriptors, kaze descriptors)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"bad cache magic in {path}")
        version, config_hash = struct.unpack("<IQ", f.read(12))
        if version != VERSION:
            raise ValueError(f"unsupported cache version {version} in {path}")
        (id_len,) = struct.unpack("<I", f.read(4))
        image_id = f.read(id_len).decode("utf-8")
        n_sift, n_kaze = struct.unpack("<II", f.read(8))
        out = []
        for _ in range(n_sift + n_kaze):
            x, y, sigma, response, kind_b = struct.unpack("<ffffB", f.read(17))
            (d_len,) = struct.unpack("<I", f.read(4))
            values = np.frombuffer(f.read(4 * d_len), dtype="<f4").astype(np.float64)
            kp = Keypoint(
                x=float(x), y=float(y), sigma=float(sigma), response=float(response),
                kind=BYTE_KINDS[kind_b],
            )
            out.append(Descriptor(keypoint=kp, values=values))
    return image_id, config_hash, out[:n_sift], out[n_sift:]


def record_valid(path, config_hash: int) -> bool:
    try:
        with open(path, "rb") as f:
            if f.read(4) != MAGIC:
                return False
            version, stored = struct.unpack("<IQ", f.read(12))
        return version == VERSION and stored == config_hash
    except (OSError, struct.error):
        return False


def extract_image(img: np.ndarray, cfg: RunConfig):
    """Both scale spaces, both detectors, descriptors; keypoints trimmed
    to cfg.top_n_percent (and capped) before description."""
    gss = build_gaussian_scalespace(
        img, cfg.gaussian_octaves, cfg.gaussian_sublevels, cfg.gaussian_base_sigma
    )
    nss = build_nonlinear_scalespace(img, cfg.diffusion_params())
    sift_kps = detect_sift(gss, cfg.sift_contrast_threshold, cfg.sift_edge_ratio)
    kaze_kps = detect_kaze(nss, cfg.kaze_threshold)
    if sift_kps:
        sift_kps = top_responses(sift_kps, cfg.top_n_percent)[: cfg.max_keypoints_per_image]
    if kaze_kps:
        kaze_kps = top_responses(kaze_kps, cfg.top_n_percent)[: cfg.max_keypoints_per_image]
    sift_descs = [describe(gss, kp) for kp in sift_kps]
    kaze_descs = [describe(nss, kp) for kp in kaze_kps]
    return sift_descs, kaze_descs


def extract_and_cache(m: DatasetManifest, cfg: RunConfig) -> CacheHandle:
    """Extract every image in the manifest into the cache directory.

    Undecodable images are logged and excluded rather than aborting the
    run; the exclusion list ends up in the benchmark report.
    """
    chash = cfg.feature_hash()
    directory = Path(cfg.cache_dir) / f"{chash:016x}"
    directory.mkdir(parents=True, exist_ok=True)
    handle = CacheHandle(directory=directory, config_hash=chash)
    for cls, paths in m.classes:
        for p in paths:
            image_id = image_id_for(p)
            record_path = directory / f"{image_id}.kfc"
            if record_valid(record_path, chash):
                handle.records[image_id] = record_path
                continue
            try:
                img = load_image(p)
                sift_descs, kaze_descs = extract_image(img, cfg)
            except Exception as e:  # decode or extraction failure
                logger.warning("excluding %s: %s", p, e)
                handle.excluded.append((image_id, str(e)))
                continue
            write_record(record_path, image_id, chash, sift_descs, kaze_descs)
            handle.records[image_id] = record_path
    return handle
