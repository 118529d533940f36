"""Dice scoring, robot-user scribbles, and the ablation benchmark runner.

The robot user stands in for a human: it looks at where the current
prediction disagrees with ground truth and scribbles the true label on
the largest mis-segmented components. The ablation runner scores five
method variants on identical initial segmentations and scribbles.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import DataError
from .grid import LabelMap, ScribbleSet, nearest_indices
from .model import SegmenterModel
from .pipeline import RefineConfig, Session, final_labels, init_segment, refine
from .synth import Dataset

METHODS = ("initial", "crf", "bifseg_nw", "bifseg_unsup", "bifseg_sup")


def dice(a: LabelMap, b: LabelMap) -> float:
    """Overlap score 2|A∩B| / (|A|+|B|); 1.0 when both maps are empty."""
    if (a.height, a.width) != (b.height, b.width):
        raise DataError("dice requires equal dimensions")
    am = a.labels == 1
    bm = b.labels == 1
    denom = int(am.sum()) + int(bm.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((am & bm).sum()) / denom


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labeled, n = ndimage.label(mask)
    if n == 0:
        return np.zeros_like(mask)
    sizes = ndimage.sum_labels(np.ones_like(mask, dtype=np.int64), labeled, range(1, n + 1))
    return labeled == (int(np.argmax(sizes)) + 1)


def _sample_pixels(mask: np.ndarray, count: int, rng: np.random.Generator):
    ys, xs = np.nonzero(mask)
    if len(xs) == 0 or count <= 0:
        return []
    take = min(count, len(xs))
    chosen = rng.choice(len(xs), size=take, replace=False)
    return sorted((int(xs[i]), int(ys[i])) for i in chosen)


def robot_scribbles(pred: LabelMap, truth: LabelMap, budget: int, seed: int) -> ScribbleSet:
    """Corrective scribbles on the largest mis-segmented components.

    Foreground scribbles come from the largest under-segmented component
    and background ones from the largest over-segmented component, each
    eroded by one pixel to stay interior (falling back to the raw
    component when erosion empties it). At most `budget` pixels total.
    """
    if (pred.height, pred.width) != (truth.height, truth.width):
        raise DataError("robot_scribbles requires equal dimensions")
    under = (truth.labels == 1) & (pred.labels == 0)
    over = (pred.labels == 1) & (truth.labels == 0)
    rng = np.random.default_rng(seed)
    picks = []
    for mask in (under, over):
        comp = _largest_component(mask)
        eroded = ndimage.binary_erosion(comp)
        picks.append(eroded if eroded.any() else comp)
    fg_budget, bg_budget = budget - budget // 2, budget // 2
    if not picks[0].any():
        bg_budget = budget
    if not picks[1].any():
        fg_budget = budget
    fg = _sample_pixels(picks[0], fg_budget, rng)
    bg = _sample_pixels(picks[1], bg_budget, rng)
    return ScribbleSet(frozenset(fg), frozenset(bg))


def crop_truth(session: Session, truth: LabelMap) -> LabelMap:
    """Ground truth cropped to the session box and resampled (nearest) to
    the session's network grid, for robot scribbles in crop coordinates."""
    box = session.box
    sub = truth.labels[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1]
    rw, rh = session.crop.width, session.crop.height
    ys = nearest_indices(sub.shape[0], rh)
    xs = nearest_indices(sub.shape[1], rw)
    return LabelMap(sub[np.ix_(ys, xs)])


@dataclass(frozen=True)
class AblationConfig:
    """`rounds` > 1 reapplies the robot per variant: the first round's
    scribbles come from the shared initial segmentation (identical across
    variants), later rounds correct each variant's own current errors."""

    refine: RefineConfig = RefineConfig()
    scribble_budget: int = 30
    rounds: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.scribble_budget < 0:
            raise DataError("rounds >= 1 and scribble_budget >= 0 required")


@dataclass
class AblationReport:
    """Per-case Dice for each method plus aggregated stats.

    Wall-clock timings are kept apart from the deterministic payload so
    reports are byte-identical across runs with the same seeds.
    """

    spec: dict
    cases: list  # per case: {case, class, dice: {method: value}}
    machine_time: dict  # method -> [seconds per case]

    def classes(self):
        return sorted({c["class"] for c in self.cases})

    def summary(self) -> dict:
        out = {}
        for cls in self.classes():
            rows = [c for c in self.cases if c["class"] == cls]
            out[cls] = {}
            for m in METHODS:
                vals = np.array([r["dice"][m] for r in rows])
                out[cls][m] = {"mean": round(float(vals.mean()), 6),
                               "std": round(float(vals.std()), 6),
                               "n": len(vals)}
        return out

    def mean_dice(self, method: str) -> float:
        return float(np.mean([c["dice"][method] for c in self.cases]))

    def to_json(self) -> str:
        payload = {"spec": self.spec, "methods": list(METHODS),
                   "summary": self.summary(), "cases": self.cases}
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "class"] + [f"dice_{m}" for m in METHODS])
        for c in self.cases:
            w.writerow([c["case"], c["class"]] + [f"{c['dice'][m]:.6f}" for m in METHODS])
        return buf.getvalue()

    def timings_json(self) -> str:
        stats = {m: {"mean_s": float(np.mean(ts)), "std_s": float(np.std(ts))}
                 for m, ts in self.machine_time.items() if ts}
        return json.dumps({"machine_time": stats}, indent=2, sort_keys=True)

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "mean_s", "std_s"])
        for m in METHODS:
            ts = self.machine_time.get(m, [])
            if ts:
                w.writerow([m, f"{np.mean(ts):.4f}", f"{np.std(ts):.4f}"])
        return buf.getvalue()


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def run_case(model: SegmenterModel, case, cfg: AblationConfig, case_seed: int) -> dict:
    """All five methods on one test case with shared box and first-round scribbles."""
    if case.box is None:
        raise DataError("test case has no bounding box")
    base, t_init = _timed(lambda: init_segment(model, case.image, case.box))
    truth_crop = crop_truth(base, case.label)
    shared = robot_scribbles(base.labels, truth_crop, cfg.scribble_budget, case_seed)
    crf_cfg = replace(cfg.refine, outer_iters=1, inner_iters=0)
    nw_cfg = replace(cfg.refine, unit_weights=True)
    variants = {
        "crf": (True, crf_cfg),
        "bifseg_nw": (True, nw_cfg),
        "bifseg_unsup": (False, cfg.refine),
        "bifseg_sup": (True, cfg.refine),
    }
    dices = {"initial": dice(final_labels(base), case.label)}
    times = {"initial": t_init}
    masks = {"initial": final_labels(base)}
    for name, (scribbled, rcfg) in variants.items():
        sess = base.clone()
        seconds = 0.0
        for r in range(cfg.rounds):
            if scribbled:
                scr = shared if r == 0 else robot_scribbles(
                    sess.labels, truth_crop, cfg.scribble_budget, case_seed + r)
            else:
                scr = ScribbleSet.empty()
            _, dt = _timed(lambda: refine(sess, scr, rcfg))
            seconds += dt
        masks[name] = final_labels(sess)
        dices[name] = dice(masks[name], case.label)
        times[name] = seconds
    return {"class": case.shape_class, "dice": dices, "times": times, "masks": masks}


def run_ablation(model: SegmenterModel, dataset: Dataset,
                 cfg: AblationConfig = AblationConfig(),
                 mask_sink=None, threads: int | None = None) -> AblationReport:
    """Score every test case under all method variants.

    Cases run in a worker pool (size from `threads` or BIFSEG_THREADS);
    results are aggregated in case order so reports stay deterministic.
    `mask_sink(case_index, method, LabelMap)` receives every mask if given.
    """
    if not dataset.test:
        raise DataError("dataset has no test cases")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(len(dataset.test))
    if threads is None:
        threads = int(os.environ.get("BIFSEG_THREADS", "0")) or min(4, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda args: run_case(model, args[0], cfg, int(args[1])),
                                zip(dataset.test, seeds)))
    cases = []
    machine_time = {m: [] for m in METHODS}
    for i, r in enumerate(results):
        cases.append({"case": i, "class": r["class"], "dice": r["dice"]})
        for m in METHODS:
            machine_time[m].append(r["times"][m])
        if mask_sink is not None:
            for m, mask in r["masks"].items():
                mask_sink(i, m, mask)
    spec = {"ablation_seed": cfg.seed, "scribble_budget": cfg.scribble_budget,
            "rounds": cfg.rounds, "n_cases": len(cases)}
    return AblationReport(spec, cases, machine_time)
