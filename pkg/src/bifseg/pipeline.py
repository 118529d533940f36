"""One interactive segmentation session: initial prediction inside a
user box, then alternating graph-cut label updates and head-only
fine-tuning under a confidence-weighted loss, optionally guided by
scribbles.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ScribbleConflictError
from .geodesic import scribble_uncertainty
from .graphcut import EnergyConfig, energy, label_update
from .grid import BoundingBox, Grid2D, LabelMap, ScribbleSet, resize_labels_back, resize_to_min_side
from .model import (ConvParams, FeatureCache, SegmenterModel, apply_head_step,
                    backprop_head, forward, head_forward, normalize_crop,
                    weighted_cross_entropy)

MIN_BOX_AREA = 4


@dataclass(frozen=True)
class RefineConfig:
    """Thresholds, weights, and schedule for one refinement round.

    t0/t1 bound the low-confidence probability band, epsilon the geodesic
    reach of scribble-based uncertainty, omega the loss weight of scribbled
    pixels. Each round alternates `outer_iters` times between a graph-cut
    label update and `inner_iters` plain gradient steps on the head
    (no momentum). `unit_weights` forces w(i)=1 everywhere (the "-w"
    ablation); `reset_head` restores the trained head at the start of
    every round instead of continuing from the previous round.
    """

    t0: float = 0.2
    t1: float = 0.7
    epsilon: float = 0.2
    omega: float = 5.0
    outer_iters: int = 4
    inner_iters: int = 20
    finetune_lr: float = 1e-2
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    unit_weights: bool = False
    reset_head: bool = False

    def __post_init__(self):
        if not (0.0 <= self.t0 < self.t1 <= 1.0):
            raise DataError("thresholds must satisfy 0 <= t0 < t1 <= 1")
        if self.omega < 1.0:
            raise DataError("omega must be >= 1")
        if self.epsilon <= 0:
            raise DataError("epsilon must be > 0")
        if self.outer_iters < 1 or self.inner_iters < 0:
            raise DataError("outer_iters >= 1 and inner_iters >= 0 required")
        if self.finetune_lr <= 0:
            raise DataError("finetune_lr must be > 0")


@dataclass
class Session:
    """Mutable state of one test image's interactive segmentation."""

    box: BoundingBox
    image_size: tuple  # (width, height) of the full image
    crop_size: tuple  # (width, height) of the box at original scale
    crop: Grid2D  # normalized, resized network input
    cache: FeatureCache
    head: ConvParams  # session-private copy, mutated by refinement
    head_init: ConvParams  # trained head, kept for reset_head
    prob: Grid2D
    labels: LabelMap
    scribbles: ScribbleSet = field(default_factory=ScribbleSet)
    history: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def clone(self) -> "Session":
        """Independent session sharing only the immutable feature cache."""
        return Session(self.box, self.image_size, self.crop_size, self.crop,
                       self.cache, self.head.copy(), self.head_init.copy(),
                       self.prob, self.labels, self.scribbles,
                       [dict(h) for h in self.history], list(self.snapshots))


def init_segment(model: SegmenterModel, image: Grid2D, box: BoundingBox) -> Session:
    """Crop, normalize, resize, run the network, and threshold at 0.5
    (ties go to background)."""
    if not box.fits_in(image.width, image.height):
        raise DataError(f"box {box} outside {image.width}x{image.height} image")
    if box.area < MIN_BOX_AREA:
        raise DataError(f"degenerate box (area {box.area} < {MIN_BOX_AREA})")
    raw = Grid2D(image.data[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1])
    resized = resize_to_min_side(raw, model.config.min_side)
    crop = normalize_crop(resized, model.norm_stats)
    t0 = time.perf_counter()
    cache, prob = forward(model, crop)
    labels = LabelMap((prob.plane() > 0.5).astype(np.uint8))
    session = Session(
        box=box,
        image_size=(image.width, image.height),
        crop_size=(box.width, box.height),
        crop=crop,
        cache=cache,
        head=model.head.copy(),
        head_init=model.head.copy(),
        prob=prob,
        labels=labels,
    )
    session.history.append({
        "phase": "initial",
        "seconds": time.perf_counter() - t0,
        "foreground": labels.foreground_count(),
    })
    session.snapshots.append(labels)
    return session


def network_uncertainty(p: Grid2D, cfg: RefineConfig) -> frozenset:
    """Pixels whose foreground probability lies strictly inside (t0, t1)."""
    pf = p.plane()
    ys, xs = np.nonzero((pf > cfg.t0) & (pf < cfg.t1))
    return frozenset((int(x), int(y)) for x, y in zip(xs, ys))


def build_weight_map(scribbles: ScribbleSet, u_p, u_s, cfg: RefineConfig,
                     shape) -> Grid2D:
    """Loss weights: omega on scribbles, 0 on uncertain pixels, 1 elsewhere.

    Scribbles take precedence over uncertainty. `shape` is (width, height).
    """
    w, h = shape
    wm = np.ones((h, w), dtype=np.float64)
    for x, y in u_p:
        wm[y, x] = 0.0
    for x, y in u_s:
        wm[y, x] = 0.0
    for x, y in scribbles.pixels:
        wm[y, x] = cfg.omega
    return Grid2D(wm)


def _merge_scribbles(current: ScribbleSet, new: ScribbleSet) -> ScribbleSet:
    conflicts = ((current.foreground | new.foreground)
                 & (current.background | new.background))
    if conflicts:
        raise ScribbleConflictError(conflicts)
    return current.merge(new)


def refine(session: Session, new_scribbles: ScribbleSet, cfg: RefineConfig = RefineConfig()) -> Session:
    """One refinement round; with an empty scribble set this is the
    unsupervised mode. Mutates and returns the session."""
    new_scribbles.validate_within(session.crop.width, session.crop.height)
    session.scribbles = _merge_scribbles(session.scribbles, new_scribbles)
    scribbles = session.scribbles
    if cfg.reset_head:
        session.head = session.head_init.copy()

    shape = (session.crop.width, session.crop.height)
    round_no = 1 + max((h["round"] for h in session.history
                        if h.get("phase") == "refine"), default=-1)
    for outer in range(cfg.outer_iters):
        t0 = time.perf_counter()
        session.labels = label_update(session.prob, session.crop, scribbles, cfg.energy)
        e = energy(session.labels, session.prob, session.crop, scribbles, cfg.energy)

        entry = {
            "phase": "refine",
            "round": round_no,
            "outer_iter": outer,
            "energy": e,
            "n_up": 0,
            "n_us": 0,
            "loss_start": None,
            "loss_end": None,
        }
        if cfg.inner_iters > 0:
            if cfg.unit_weights:
                wmap = Grid2D(np.ones((session.crop.height, session.crop.width)))
            else:
                u_p = network_uncertainty(session.prob, cfg)
                u_s = scribble_uncertainty(session.labels, scribbles,
                                           session.crop, cfg.epsilon)
                entry["n_up"] = len(u_p)
                entry["n_us"] = len(u_s)
                wmap = build_weight_map(scribbles, u_p, u_s, cfg, shape)
            entry["loss_start"] = weighted_cross_entropy(session.prob, session.labels, wmap)
            for _ in range(cfg.inner_iters):
                grad = backprop_head(session.cache, session.labels, wmap, session.head)
                apply_head_step(session.head, grad, cfg.finetune_lr)
            session.prob = head_forward(session.head, session.cache)
            entry["loss_end"] = weighted_cross_entropy(session.prob, session.labels, wmap)
        entry["seconds"] = time.perf_counter() - t0
        session.history.append(entry)
        session.snapshots.append(session.labels)
    return session


def final_labels(session: Session) -> LabelMap:
    """Session labels mapped back into full-image coordinates; pixels
    outside the box are background."""
    crop_labels = resize_labels_back(session.labels, session.crop_size)
    w, h = session.image_size
    full = np.zeros((h, w), dtype=np.uint8)
    full[session.box.y_min:session.box.y_max + 1,
         session.box.x_min:session.box.x_max + 1] = crop_labels.labels
    return LabelMap(full)


def session_diagnostics(session: Session) -> dict:
    """JSON-ready summary: per-iteration energies, losses, set sizes, timings."""
    return {
        "box": [session.box.x_min, session.box.y_min, session.box.x_max, session.box.y_max],
        "image_size": list(session.image_size),
        "crop_size": list(session.crop_size),
        "resized_size": [session.crop.width, session.crop.height],
        "scribble_count": len(session.scribbles),
        "history": [dict(h) for h in session.history],
    }
