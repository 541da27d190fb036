"""Dataset ingestion and train/test splitting.

Two layouts: `class_folders` (one subdirectory per class) for
classification runs, and `annotated_flat` (images next to VOC-style XML
or equivalent JSON annotation files) for keypoint-overlap evaluation.
"""

from dataclasses import dataclass, field
from pathlib import Path
import json
import xml.etree.ElementTree as ET

import numpy as np
from PIL import Image

from .kosmetrics import Annotation, BoundingBox
from .scalespace import to_gray

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class DatasetError(ValueError):
    pass


@dataclass
class DatasetManifest:
    root: Path
    classes: list  # (class_name, [image paths]) sorted by name
    annotations: dict = field(default_factory=dict)  # image_id -> Annotation
    layout: str = "class_folders"

    def image_ids(self):
        for cls, paths in self.classes:
            for p in paths:
                yield image_id_for(p)


@dataclass
class Split:
    n_train_per_class: int
    seed: int
    train_ids: dict  # class -> [image ids]
    test_ids: dict


def image_id_for(path: Path) -> str:
    return Path(path).stem


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return to_gray(np.asarray(im))


def parse_voc_xml(path) -> Annotation:
    """Minimal VOC subset: object/name and bndbox xmin..ymax only."""
    try:
        tree = ET.parse(path)
    except ET.ParseError as e:
        raise DatasetError(f"unreadable annotation {path}: {e}") from e
    boxes = []
    for obj in tree.getroot().iter("object"):
        name = obj.findtext("name", default="object")
        bb = obj.find("bndbox")
        if bb is None:
            raise DatasetError(f"object without bndbox in {path}")
        vals = {t: float(bb.findtext(t)) for t in ("xmin", "ymin", "xmax", "ymax")}
        boxes.append((name, BoundingBox(vals["xmin"], vals["ymin"], vals["xmax"], vals["ymax"])))
    return Annotation(image_id=Path(path).stem, boxes=tuple(boxes))


def parse_json_annotation(path) -> Annotation:
    """JSON form: {"objects": [{"name": ..., "bndbox": {"xmin": ...}}]}."""
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, OSError) as e:
        raise DatasetError(f"unreadable annotation {path}: {e}") from e
    boxes = []
    for obj in doc.get("objects", []):
        bb = obj["bndbox"]
        boxes.append(
            (obj.get("name", "object"), BoundingBox(bb["xmin"], bb["ymin"], bb["xmax"], bb["ymax"]))
        )
    return Annotation(image_id=Path(path).stem, boxes=tuple(boxes))


def _images_in(directory: Path):
    return sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS and p.is_file()
    )


def load_dataset(root, layout: str = "class_folders") -> DatasetManifest:
    """Build a manifest with deterministic lexicographic ordering."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    if layout == "class_folders":
        classes = []
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            imgs = _images_in(d)
            if not imgs:
                raise DatasetError(f"class folder {d} contains no images")
            classes.append((d.name, imgs))
        if not classes:
            raise DatasetError(f"no class folders under {root}")
        return DatasetManifest(root=root, classes=classes, layout=layout)
    if layout == "annotated_flat":
        imgs = _images_in(root)
        if not imgs:
            raise DatasetError(f"no images under {root}")
        annotations = {}
        for p in imgs:
            xml_path = p.with_suffix(".xml")
            json_path = p.with_suffix(".json")
            if xml_path.exists():
                annotations[p.stem] = parse_voc_xml(xml_path)
            elif json_path.exists():
                annotations[p.stem] = parse_json_annotation(json_path)
        return DatasetManifest(
            root=root, classes=[("all", imgs)], annotations=annotations, layout=layout
        )
    raise DatasetError(f"unknown layout {layout!r}")


def make_split(
    m: DatasetManifest, n_train: int, seed: int, test_cap: int = 25
) -> Split:
    """Seeded per-class shuffle: first n_train images train, the rest
    (capped) test."""
    rng = np.random.default_rng(seed)
    train_ids, test_ids = {}, {}
    for cls, paths in m.classes:
        ids = [image_id_for(p) for p in paths]
        if len(ids) <= n_train:
            raise DatasetError(
                f"class {cls!r} has {len(ids)} images, needs more than n_train={n_train}"
            )
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        train_ids[cls] = shuffled[:n_train]
        test_ids[cls] = shuffled[n_train : n_train + test_cap]
    return Split(n_train_per_class=n_train, seed=seed, train_ids=train_ids, test_ids=test_ids)
