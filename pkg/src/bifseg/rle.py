"""Run-length encoding of binary masks for the HTTP API.

Runs are (start, length) pairs of foreground pixels over row-major
order. Encoding and decoding are exact inverses for any mask.
"""
from __future__ import annotations

import numpy as np

from .errors import DataError
from .grid import LabelMap


def encode_mask(mask: LabelMap) -> list:
    flat = mask.labels.ravel()
    padded = np.concatenate(([0], flat, [0]))
    changes = np.flatnonzero(padded[1:] != padded[:-1])
    starts = changes[0::2]
    ends = changes[1::2]
    return [[int(s), int(e - s)] for s, e in zip(starts, ends)]


def decode_mask(runs, width: int, height: int) -> LabelMap:
    flat = np.zeros(width * height, dtype=np.uint8)
    prev_end = 0
    for run in runs:
        if len(run) != 2:
            raise DataError(f"malformed RLE run {run!r}")
        start, length = int(run[0]), int(run[1])
        if length <= 0 or start < prev_end or start + length > flat.size:
            raise DataError(f"invalid RLE run ({start}, {length})")
        flat[start:start + length] = 1
        prev_end = start + length
    return LabelMap(flat.reshape(height, width))


def decode_pixels(runs, width: int, height: int) -> frozenset:
    """RLE runs to a set of (x, y) pixels on a width x height grid."""
    mask = decode_mask(runs, width, height)
    ys, xs = np.nonzero(mask.labels)
    return frozenset((int(x), int(y)) for x, y in zip(xs, ys))
