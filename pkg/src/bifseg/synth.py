"""Synthetic shape datasets for training and benchmarking.

Images are textured grayscale squares with a single labeled instance of
an ellipse, rectangle, or annulus. All classes share the same intensity
statistics and differ only in shape, so a class held out of training
still looks familiar to the network at the bounding-box level.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError
from .grid import BoundingBox, Grid2D, LabelMap, crop_with_margin, save_image

SHAPE_CLASSES = ("ellipse", "rectangle", "annulus")


@dataclass(frozen=True)
class SyntheticSpec:
    """Generation parameters; a fixed seed reproduces the dataset exactly.

    Distractor blobs share the instance's intensity offset, and a smooth
    bias field modulates brightness across the image, so intensity alone
    does not separate the instance from its surroundings.
    """

    image_size: int = 64
    train_classes: tuple = ("ellipse", "annulus")
    heldout_classes: tuple = ("rectangle",)
    train_per_class: int = 100
    test_per_class: int = 20
    contrast: float = 0.3
    noise_std: float = 0.06
    texture_smooth: float = 2.0
    bias_field: float = 0.12
    distractors: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "train_classes", tuple(self.train_classes))
        object.__setattr__(self, "heldout_classes", tuple(self.heldout_classes))
        for c in self.train_classes + self.heldout_classes:
            if c not in SHAPE_CLASSES:
                raise DataError(f"unknown shape class '{c}'")
        if len(self.train_classes) < 2:
            raise DataError("need at least two training classes")
        if not self.heldout_classes:
            raise DataError("need at least one held-out class")
        if set(self.train_classes) & set(self.heldout_classes):
            raise DataError("held-out classes must not appear in training")
        if self.image_size < 24:
            raise DataError("image_size too small")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class Case:
    """One generated image with its ground-truth instance mask."""

    image: Grid2D
    label: LabelMap
    shape_class: str
    case_seed: int
    box: BoundingBox | None = None  # user-style box, set for test cases


@dataclass
class Dataset:
    spec: SyntheticSpec
    train: list
    test: list


def _shape_mask(cls: str, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    cx = size / 2 + rng.uniform(-size * 0.08, size * 0.08)
    cy = size / 2 + rng.uniform(-size * 0.08, size * 0.08)
    if cls == "ellipse":
        a = rng.uniform(0.16, 0.30) * size
        b = rng.uniform(0.16, 0.30) * size
        theta = rng.uniform(0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if cls == "rectangle":
        hw = rng.uniform(0.14, 0.28) * size
        hh = rng.uniform(0.14, 0.28) * size
        return (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
    if cls == "annulus":
        r1 = rng.uniform(0.22, 0.32) * size
        r0 = r1 * rng.uniform(0.35, 0.55)
        rr = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        return (rr <= r1) & (rr >= r0)
    raise DataError(f"unknown shape class '{cls}'")


def _texture(size: int, smooth: float, rng: np.random.Generator) -> np.ndarray:
    t = gaussian_filter(rng.standard_normal((size, size)), smooth)
    s = t.std()
    return t / s if s > 0 else t


def _distractor_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    cx = rng.uniform(0.1, 0.9) * size
    cy = rng.uniform(0.1, 0.9) * size
    a = rng.uniform(0.08, 0.18) * size
    b = rng.uniform(0.08, 0.18) * size
    theta = rng.uniform(0, np.pi)
    c, s = np.cos(theta), np.sin(theta)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def make_case(cls: str, spec: SyntheticSpec, case_seed: int) -> Case:
    rng = np.random.default_rng(case_seed)
    size = spec.image_size
    mask = _shape_mask(cls, size, rng)
    bright = mask.copy()
    for _ in range(int(rng.integers(max(1, spec.distractors - 1), spec.distractors + 2))):
        bright |= _distractor_mask(size, rng)
    img = 0.42 + 0.06 * _texture(size, spec.texture_smooth, rng)
    img = img + spec.contrast * rng.uniform(0.7, 1.25) * bright
    if spec.bias_field > 0:
        img = img + spec.bias_field * _texture(size, size / 5.0, rng)
    img = img + rng.normal(0.0, spec.noise_std, size=(size, size))
    img = np.clip(img, 0.0, 1.0)
    return Case(Grid2D(img.astype(np.float32)),
                LabelMap(mask.astype(np.uint8)), cls, case_seed)


def generate_dataset(spec: SyntheticSpec) -> Dataset:
    """Reproducible train/test cases; held-out classes only in the test split.

    Test cases carry a user-style bounding box: the tight instance box
    expanded by a seeded random margin, like a quickly drawn box.
    """
    root = np.random.SeedSequence(spec.seed)
    train_seq, test_seq = root.spawn(2)
    train = []
    for i, seed in enumerate(train_seq.generate_state(len(spec.train_classes) * spec.train_per_class)):
        cls = spec.train_classes[i % len(spec.train_classes)]
        train.append(make_case(cls, spec, int(seed)))
    test = []
    for i, seed in enumerate(test_seq.generate_state(len(spec.heldout_classes) * spec.test_per_class)):
        cls = spec.heldout_classes[i % len(spec.heldout_classes)]
        case = make_case(cls, spec, int(seed))
        _, _, box = crop_with_margin(case.image, case.label, 1, rng_seed=int(seed) + 1)
        case.box = box
        test.append(case)
    return Dataset(spec, train, test)


def training_crops(dataset: Dataset, margin_seed: int = 0) -> list:
    """(crop, label) pairs, each instance cropped with a random margin."""
    out = []
    for i, case in enumerate(dataset.train):
        crop, lab, _ = crop_with_margin(case.image, case.label, 1, rng_seed=margin_seed + i)
        out.append((crop, lab))
    return out


def write_dataset(dataset: Dataset, out_dir) -> dict:
    """Materialize images/labels as PNGs plus train/test manifests.

    Returns the manifest dict written to `manifest.json`. The train
    manifest lists image/label paths and instance labels; the test
    manifest additionally carries boxes and shape classes.
    """
    out = Path(out_dir)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(parents=True, exist_ok=True)
    manifest = {"spec": asdict(dataset.spec), "train": [], "test": []}
    for i, case in enumerate(dataset.train):
        img = f"train/img_{i:04d}.png"
        lab = f"train/lab_{i:04d}.png"
        save_image(out / img, case.image, bit_depth=16)
        save_image(out / lab, Grid2D(case.label.labels.astype(np.float32)), bit_depth=8)
        manifest["train"].append({"image": img, "label": lab, "instance_label": 255,
                                  "class": case.shape_class, "seed": case.case_seed})
    for i, case in enumerate(dataset.test):
        img = f"test/img_{i:04d}.png"
        lab = f"test/lab_{i:04d}.png"
        save_image(out / img, case.image, bit_depth=16)
        save_image(out / lab, Grid2D(case.label.labels.astype(np.float32)), bit_depth=8)
        b = case.box
        manifest["test"].append({"image": img, "label": lab, "instance_label": 255,
                                 "class": case.shape_class, "seed": case.case_seed,
                                 "box": [b.x_min, b.y_min, b.x_max, b.y_max]})
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest
