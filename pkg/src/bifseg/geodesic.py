"""Geodesic distance transforms from scribble seeds.

Distances are exact shortest paths on the 8-connected grid graph where
stepping between neighbors costs sqrt(spatial^2 + (gamma * dI)^2), with
intensities min-max rescaled to the crop's [0, 1] range first. Solved
with Dijkstra's algorithm on the explicit graph (scipy.sparse.csgraph).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DataError
from .grid import Grid2D, LabelMap, ScribbleSet


@dataclass(frozen=True)
class DistanceMap:
    """Per-pixel geodesic distance to a seed set; exactly 0 on seeds."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        a.setflags(write=False)
        object.__setattr__(self, "values", a)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _rescaled_intensity(crop: Grid2D) -> np.ndarray:
    a = crop.plane().astype(np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi <= lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def _grid_graph(intensity: np.ndarray, gamma: float) -> csr_matrix:
    h, w = intensity.shape
    idx = np.arange(h * w).reshape(h, w)
    us, vs, ws = [], [], []
    for dy, dx, dist2 in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0), (1, -1, 2.0)):
        ys, ye = slice(0, h - dy), slice(dy, h)
        if dx >= 0:
            xs, xe = slice(0, w - dx), slice(dx, w)
        else:
            xs, xe = slice(-dx, w), slice(0, w + dx)
        di = intensity[ys, xs] - intensity[ye, xe]
        cost = np.sqrt(dist2 + (gamma * di) ** 2)
        us.append(idx[ys, xs].ravel())
        vs.append(idx[ye, xe].ravel())
        ws.append(cost.ravel())
    us, vs, ws = np.concatenate(us), np.concatenate(vs), np.concatenate(ws)
    return csr_matrix((ws, (us, vs)), shape=(h * w, h * w))


def geodesic_distance(crop: Grid2D, seeds, gamma: float = 1.0) -> DistanceMap:
    """Exact geodesic distance from every pixel to the nearest seed."""
    seeds = list(seeds)
    if not seeds:
        raise DataError("no seeds")
    h, w = crop.height, crop.width
    seed_idx = []
    for x, y in seeds:
        if not (0 <= x < w and 0 <= y < h):
            raise DataError(f"seed ({x}, {y}) outside {w}x{h} grid")
        seed_idx.append(y * w + x)
    graph = _grid_graph(_rescaled_intensity(crop), gamma)
    dist = dijkstra(graph, directed=False, indices=np.unique(seed_idx), min_only=True)
    return DistanceMap(dist.reshape(h, w))


def scribble_uncertainty(labels: LabelMap, scribbles: ScribbleSet, crop: Grid2D,
                         epsilon: float, gamma: float = 1.0) -> frozenset:
    """Pixels whose current label is contradicted by a nearby scribble.

    A non-scribbled pixel is uncertain when it lies within geodesic
    distance epsilon of a foreground scribble while labeled background,
    or of a background scribble while labeled foreground.
    """
    if epsilon <= 0:
        raise DataError("epsilon must be > 0")
    if scribbles.is_empty():
        return frozenset()
    scribbles.validate_within(crop.width, crop.height)
    in_s = scribbles.pixels
    out = set()
    y = labels.labels
    for seeds, wrong_label in ((scribbles.foreground, 0), (scribbles.background, 1)):
        if not seeds:
            continue
        dist = geodesic_distance(crop, seeds, gamma).values
        close = (dist < epsilon) & (y == wrong_label)
        for py, px in zip(*np.nonzero(close)):
            pix = (int(px), int(py))
            if pix not in in_s:
                out.add(pix)
    return frozenset(out)
