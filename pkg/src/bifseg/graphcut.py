"""Binary CRF energy over pixel labels and its exact minimization by min-cut.

The energy is a sum of per-pixel label costs (negative log-probability,
with scribbled pixels forced to their user label) and contrast-sensitive
smoothness costs between neighboring pixels. The pairwise term is
submodular, so the global minimizer is recovered exactly from an s-t
min cut: source-side pixels are foreground.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .grid import Grid2D, LabelMap, ScribbleSet
from .maxflow import FlowNetwork

# stands in for the infinite cost of violating a scribble; far above any
# achievable finite cut but safely inside float64 range
K_INF = 1e9

PROB_EPS = 1e-7  # probabilities clamped to [PROB_EPS, 1 - PROB_EPS] before log


@dataclass(frozen=True)
class EnergyConfig:
    """Pairwise weight, intensity scale, and neighborhood system."""

    lam: float = 3.0
    sigma: float = 0.1
    neighborhood: int = 4

    def __post_init__(self):
        if self.lam < 0:
            raise DataError("lambda must be >= 0")
        if self.sigma <= 0:
            raise DataError("sigma must be > 0")
        if self.neighborhood not in (4, 8):
            raise DataError("neighborhood must be 4 or 8")


def pairwise_potential(xi: float, xj: float, yi: int, yj: int, dij: float,
                       cfg: EnergyConfig) -> float:
    """Smoothness cost between two neighbors: 0 when labels agree, else
    exp(-(xi-xj)^2 / (2 sigma^2)) / dij."""
    if dij <= 0:
        raise DataError("pixel distance must be positive")
    if yi == yj:
        return 0.0
    diff = float(xi) - float(xj)
    return float(np.exp(-(diff * diff) / (2.0 * cfg.sigma ** 2)) / dij)


def clamp_probability(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def unary_from_probability(p: Grid2D, scribbles: ScribbleSet):
    """Per-pixel label costs (cost_background, cost_foreground).

    Non-scribbled pixels pay -log of the corresponding softmax
    probability. A scribbled pixel pays 0 for its user label and K_INF
    for the opposite one, which makes the min cut respect the scribble.
    """
    pf = clamp_probability(p.plane().astype(np.float64))
    cost1 = -np.log(pf)
    cost0 = -np.log(1.0 - pf)
    scribbles.validate_within(p.width, p.height)
    fg, bg = scribbles.masks(p.width, p.height)
    cost0[fg] = K_INF
    cost1[fg] = 0.0
    cost1[bg] = K_INF
    cost0[bg] = 0.0
    return cost0, cost1


def _neighbor_arcs(intensity: np.ndarray, cfg: EnergyConfig):
    """Flat (i, j, weight) arrays for each unordered neighbor pair."""
    h, w = intensity.shape
    idx = np.arange(h * w).reshape(h, w)
    offsets = [(0, 1, 1.0), (1, 0, 1.0)]
    if cfg.neighborhood == 8:
        r2 = float(np.sqrt(2.0))
        offsets += [(1, 1, r2), (1, -1, r2)]
    us, vs, ws = [], [], []
    inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma ** 2)
    for dy, dx, dist in offsets:
        ys = slice(0, h - dy)
        ye = slice(dy, h)
        if dx >= 0:
            xs, xe = slice(0, w - dx), slice(dx, w)
        else:
            xs, xe = slice(-dx, w), slice(0, w + dx)
        a = intensity[ys, xs]
        b = intensity[ye, xe]
        diff = a.astype(np.float64) - b.astype(np.float64)
        weight = np.exp(-(diff * diff) * inv_two_sigma2) / dist
        us.append(idx[ys, xs].ravel())
        vs.append(idx[ye, xe].ravel())
        ws.append(weight.ravel())
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


def _check_dims(p: Grid2D, crop: Grid2D):
    if (p.height, p.width) != (crop.height, crop.width):
        raise DataError("probability map and crop dimensions disagree")


def label_update(p: Grid2D, crop: Grid2D, scribbles: ScribbleSet,
                 cfg: EnergyConfig) -> LabelMap:
    """Exact global minimizer of the label energy under scribble constraints.

    Ties at p == 0.5 with lam == 0 resolve to background (the source-side
    arc saturates, leaving the pixel on the sink side).
    """
    _check_dims(p, crop)
    h, w = p.height, p.width
    cost0, cost1 = unary_from_probability(p, scribbles)

    net = FlowNetwork(h * w)
    nodes = np.arange(h * w)
    # source-side arc pays the background cost (cut when the pixel ends
    # up on the sink side), sink-side arc pays the foreground cost
    net.add_arcs(np.full(h * w, net.source), nodes, cost0.ravel(), 0.0)
    net.add_arcs(nodes, np.full(h * w, net.sink), cost1.ravel(), 0.0)
    if cfg.lam > 0:
        us, vs, ws = _neighbor_arcs(crop.plane(), cfg)
        net.add_arcs(us, vs, cfg.lam * ws, cfg.lam * ws)
    _, source_side = net.min_cut()
    return LabelMap(source_side.reshape(h, w).astype(np.uint8))


def energy(labels: LabelMap, p: Grid2D, crop: Grid2D, scribbles: ScribbleSet,
           cfg: EnergyConfig) -> float:
    """Total energy of a labeling; +inf if it violates a scribble."""
    _check_dims(p, crop)
    y = labels.labels
    fg, bg = scribbles.masks(p.width, p.height)
    if np.any(y[fg] != 1) or np.any(y[bg] != 0):
        return float("inf")
    cost0, cost1 = unary_from_probability(p, scribbles)
    scribbled = fg | bg
    unary = np.where(y == 1, cost1, cost0)
    total = float(unary[~scribbled].sum())
    if cfg.lam > 0:
        us, vs, ws = _neighbor_arcs(crop.plane(), cfg)
        yflat = y.ravel()
        total += cfg.lam * float(ws[yflat[us] != yflat[vs]].sum())
    return total
