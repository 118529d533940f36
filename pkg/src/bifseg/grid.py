"""Dense grid containers, bounding boxes, scribbles, and raster I/O.

Grids are immutable value objects: the wrapped numpy arrays are marked
read-only at construction, so instances can be shared freely between
threads. Coordinates are (x, y) with x running along image width.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, ScribbleConflictError

MARGIN_MAX = 10  # largest random box expansion, per side

_RAW_MAGIC = b"BIFG"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid2D:
    """A (height, width, channels) scalar field of finite float values.

    Single-channel inputs may be passed as (height, width); they are
    stored with an explicit channel axis. float64 data is preserved
    (used by gradient-check paths), everything else becomes float32.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or min(a.shape) < 1:
            raise DataError(f"grid data must be HxW or HxWxC with positive dims, got shape {a.shape}")
        if a.dtype != np.float64:
            a = a.astype(np.float32)
        if not np.all(np.isfinite(a)):
            raise DataError("grid data contains non-finite values")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int = 0) -> np.ndarray:
        """Read-only (height, width) view of one channel."""
        return self.data[:, :, c]


@dataclass(frozen=True)
class LabelMap:
    """A (height, width) map of binary labels in {0, 1}."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2 or min(a.shape) < 1:
            raise DataError(f"label map must be 2D with positive dims, got shape {a.shape}")
        a = a.astype(np.uint8)
        if not np.isin(a, (0, 1)).all():
            raise DataError("label map values must be 0 or 1")
        object.__setattr__(self, "labels", _freeze(a))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def foreground_count(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel rectangle [x_min, x_max] x [y_min, y_max]."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (0 <= self.x_min <= self.x_max and 0 <= self.y_min <= self.y_max):
            raise DataError(f"invalid bounding box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def fits_in(self, width: int, height: int) -> bool:
        return self.x_max < width and self.y_max < height

    def expand(self, left: int, top: int, right: int, bottom: int, width: int, height: int) -> "BoundingBox":
        """Grow per side, clipped to an image of the given size."""
        return BoundingBox(
            max(0, self.x_min - left),
            max(0, self.y_min - top),
            min(width - 1, self.x_max + right),
            min(height - 1, self.y_max + bottom),
        )

    def contains(self, other: "BoundingBox") -> bool:
        return (self.x_min <= other.x_min and self.y_min <= other.y_min
                and self.x_max >= other.x_max and self.y_max >= other.y_max)


def _check_pixels(pixels, what: str):
    out = []
    for p in pixels:
        x, y = p
        out.append((int(x), int(y)))
    return frozenset(out)


@dataclass(frozen=True)
class ScribbleSet:
    """Foreground/background scribble pixels as (x, y) pairs in crop coordinates."""

    foreground: frozenset = frozenset()
    background: frozenset = frozenset()

    def __post_init__(self):
        fg = _check_pixels(self.foreground, "foreground")
        bg = _check_pixels(self.background, "background")
        clash = fg & bg
        if clash:
            raise ScribbleConflictError(clash)
        object.__setattr__(self, "foreground", fg)
        object.__setattr__(self, "background", bg)

    @classmethod
    def empty(cls) -> "ScribbleSet":
        return cls()

    def is_empty(self) -> bool:
        return not self.foreground and not self.background

    def __len__(self) -> int:
        return len(self.foreground) + len(self.background)

    @property
    def pixels(self) -> frozenset:
        return self.foreground | self.background

    def merge(self, other: "ScribbleSet") -> "ScribbleSet":
        """Union of two scribble sets; conflicting pixels raise."""
        return ScribbleSet(self.foreground | other.foreground,
                           self.background | other.background)

    def validate_within(self, width: int, height: int):
        for x, y in self.pixels:
            if not (0 <= x < width and 0 <= y < height):
                raise DataError(f"scribble pixel ({x}, {y}) outside {width}x{height} grid")

    def masks(self, width: int, height: int):
        """Boolean (height, width) masks (foreground, background)."""
        fg = np.zeros((height, width), dtype=bool)
        bg = np.zeros((height, width), dtype=bool)
        for x, y in self.foreground:
            fg[y, x] = True
        for x, y in self.background:
            bg[y, x] = True
        return fg, bg


def tight_box(mask: np.ndarray) -> BoundingBox:
    """Smallest box containing all true pixels of a boolean mask."""
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise DataError("empty instance")
    return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def crop_with_margin(image: Grid2D, label, instance_label: int, rng_seed: int):
    """Crop one labeled instance with a random per-side margin.

    `label` is an integer id map (LabelMap or array); the crop's label is
    binarized against `instance_label`. Each side of the tight box is
    expanded by an independent uniform integer margin in [0, MARGIN_MAX],
    drawn in (left, top, right, bottom) order, then clipped to the image.

    Returns (cropped image, binarized cropped label, box).
    """
    ids = label.labels if isinstance(label, LabelMap) else np.asarray(label)
    if ids.shape != (image.height, image.width):
        raise DataError("label dimensions do not match image")
    mask = ids == instance_label
    if not mask.any():
        raise DataError("empty instance")
    box = tight_box(mask)
    rng = np.random.default_rng(rng_seed)
    left, top, right, bottom = (int(m) for m in rng.integers(0, MARGIN_MAX + 1, size=4))
    box = box.expand(left, top, right, bottom, image.width, image.height)
    sl = np.s_[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1]
    return Grid2D(image.data[sl]), LabelMap(mask[sl].astype(np.uint8)), box


def _lerp(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    # a + t*(b-a) keeps constant inputs exactly constant
    return a + t * (b - a)


def _bilinear(a: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, C) array using the pixel-center convention."""
    h, w = a.shape[:2]
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    ty = (ys - y0).astype(a.dtype)
    tx = (xs - x0).astype(a.dtype)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = _lerp(a[np.ix_(y0c, x0c)], a[np.ix_(y0c, x1c)], tx[None, :, None])
    bot = _lerp(a[np.ix_(y1c, x0c)], a[np.ix_(y1c, x1c)], tx[None, :, None])
    return _lerp(top, bot, ty[:, None, None])


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def resize_to_min_side(image: Grid2D, target_min: int) -> Grid2D:
    """Bilinear resample so min(width, height) == target_min, keeping aspect ratio."""
    if target_min < 1:
        raise DataError("target_min must be >= 1")
    h, w = image.height, image.width
    if min(h, w) == target_min:
        return image
    scale = target_min / min(h, w)
    if w <= h:
        new_w, new_h = target_min, _round_half_up(h * scale)
    else:
        new_w, new_h = _round_half_up(w * scale), target_min
    return Grid2D(_bilinear(image.data, new_h, new_w))


def nearest_indices(src_size: int, dst_size: int) -> np.ndarray:
    """Source index per destination pixel under the pixel-center convention."""
    idx = np.floor((np.arange(dst_size) + 0.5) * (src_size / dst_size)).astype(np.int64)
    return np.clip(idx, 0, src_size - 1)


def resize_labels_back(label: LabelMap, original) -> LabelMap:
    """Nearest-neighbor resample of a label map to (width, height) `original`."""
    new_w, new_h = int(original[0]), int(original[1])
    if (new_w, new_h) == (label.width, label.height):
        return label
    ys = nearest_indices(label.height, new_h)
    xs = nearest_indices(label.width, new_w)
    return LabelMap(label.labels[np.ix_(ys, xs)])


def load_image(path) -> Grid2D:
    """Load an 8- or 16-bit single-channel PNG/PGM as intensities in [0, 1]."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    a = np.asarray(img)
    if a.ndim != 2:
        raise DataError(f"{path}: expected single-channel image, got mode {img.mode}")
    if img.mode == "L":
        scale = 255.0
    elif img.mode in ("I;16", "I"):
        if a.max(initial=0) > 65535 or a.min(initial=0) < 0:
            raise DataError(f"{path}: unsupported bit depth (mode {img.mode})")
        scale = 65535.0
    else:
        raise DataError(f"{path}: unsupported image mode {img.mode}")
    return Grid2D(a.astype(np.float32) / scale)


def load_instance_map(path) -> np.ndarray:
    """Integer instance-id raster (8/16-bit), values returned untouched."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read label raster {path}: {exc}") from exc
    a = np.asarray(img)
    if a.ndim != 2 or img.mode not in ("L", "I;16", "I"):
        raise DataError(f"{path}: expected single-channel integer raster, got mode {img.mode}")
    return a.astype(np.int64)


def save_image(path, image: Grid2D, bit_depth: int = 8):
    """Save a single-channel grid of [0, 1] intensities; inverse of load_image."""
    if image.channels != 1:
        raise DataError("save_image requires a single-channel grid")
    if bit_depth == 8:
        a = np.clip(np.rint(image.plane() * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(a, mode="L").save(path)
    elif bit_depth == 16:
        a = np.clip(np.rint(image.plane() * 65535.0), 0, 65535).astype(np.uint16)
        Image.fromarray(a).save(path)  # uint16 -> 16-bit grayscale
    else:
        raise DataError(f"unsupported bit depth {bit_depth}")


def save_raw_grid(path, grid: Grid2D):
    """Write the internal raw format: 'BIFG', u32 width/height/channels, float32 data."""
    with open(path, "wb") as f:
        f.write(_RAW_MAGIC)
        f.write(struct.pack("<III", grid.width, grid.height, grid.channels))
        f.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())


def load_raw_grid(path) -> Grid2D:
    data = Path(path).read_bytes()
    if data[:4] != _RAW_MAGIC:
        raise DataError(f"{path}: not a raw grid file")
    w, h, c = struct.unpack_from("<III", data, 4)
    expected = 16 + 4 * w * h * c
    if len(data) != expected:
        raise DataError(f"{path}: truncated raw grid ({len(data)} bytes, expected {expected})")
    a = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w, c)
    return Grid2D(a)
