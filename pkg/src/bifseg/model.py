"""Trainable dilated-convolution binary segmenter with a cacheable feature trunk.

Five convolution blocks with increasing dilation feed a concatenation
layer; a final classifier convolution ("head") maps the concatenated
features to two logits per pixel. Only the head is touched during
image-specific fine-tuning, so the concatenated features of a test crop
are computed once and cached.

Everything is plain numpy. Convolutions are zero-padded to preserve
resolution. Arrays are float32 by default; building a model with
dtype=float64 switches the whole computation to double precision for
gradient checks.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DataError, NumericError
from .grid import Grid2D, LabelMap, resize_labels_back, resize_to_min_side

_MODEL_MAGIC = b"BSGM"
_MODEL_VERSION = 1

PROB_EPS = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; every field participates in the config hash."""

    in_channels: int = 1
    block_channels: tuple = (16, 16, 16, 16, 16)
    block_dilations: tuple = (1, 2, 4, 8, 16)
    layers_per_block: int = 2
    kernel: int = 3
    head_kernel: int = 1
    min_side: int = 128

    def __post_init__(self):
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        object.__setattr__(self, "block_dilations", tuple(int(d) for d in self.block_dilations))
        if len(self.block_channels) != len(self.block_dilations):
            raise DataError("block_channels and block_dilations lengths differ")
        if not self.block_channels:
            raise DataError("need at least one block")
        if any(c < 1 for c in self.block_channels) or any(d < 1 for d in self.block_dilations):
            raise DataError("channels and dilations must be positive")
        if self.kernel % 2 != 1 or self.head_kernel % 2 != 1:
            raise DataError("kernel sizes must be odd")
        if self.layers_per_block < 1 or self.min_side < 1 or self.in_channels < 1:
            raise DataError("invalid model config")

    @property
    def feature_channels(self) -> int:
        return sum(self.block_channels)

    def hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrainConfig:
    """SGD schedule: initial rate halved every `halve_every` iterations."""

    learning_rate: float = 1e-3
    halve_every: int = 5000
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 1
    max_iterations: int = 60000

    def __post_init__(self):
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise DataError("train config values must be nonnegative")
        if self.halve_every < 1 or self.batch_size < 1 or self.max_iterations < 1:
            raise DataError("train config counts must be >= 1")

    def rate_at(self, iteration: int) -> float:
        return self.learning_rate * 0.5 ** (iteration // self.halve_every)


@dataclass
class ConvParams:
    """One convolution layer: weight (c_out, c_in, k, k) and bias (c_out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def copy(self) -> "ConvParams":
        return ConvParams(self.weight.copy(), self.bias.copy())

    def astype(self, dtype) -> "ConvParams":
        return ConvParams(self.weight.astype(dtype), self.bias.astype(dtype))


@dataclass
class HeadGradient:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class SegmenterModel:
    """Feature-extractor blocks plus classifier head and input statistics."""

    config: ModelConfig
    blocks: list  # list[list[ConvParams]]
    head: ConvParams
    norm_stats: tuple = (0.0, 1.0)
    loss_curve: np.ndarray | None = None  # transient, not serialized

    @property
    def config_hash(self) -> str:
        return self.config.hash()

    def parameters(self):
        for layers in self.blocks:
            yield from layers
        yield self.head

    def copy(self) -> "SegmenterModel":
        return SegmenterModel(self.config, [[p.copy() for p in ls] for ls in self.blocks],
                              self.head.copy(), self.norm_stats, self.loss_curve)


@dataclass
class FeatureCache:
    """Concatenated trunk features of one crop, plus the column matrix the
    head convolution consumes (precomputed once; fine-tune steps reuse it)."""

    features: Grid2D
    cols: np.ndarray  # (c_feat * k * k, h * w)
    config_hash: str
    head_kernel: int

    @property
    def height(self) -> int:
        return self.features.height

    @property
    def width(self) -> int:
        return self.features.width


def init_model(config: ModelConfig = ModelConfig(), seed: int = 0,
               dtype=np.float32) -> SegmenterModel:
    """He-initialized trunk, zero-initialized head (so an untrained model
    outputs probability 0.5 everywhere)."""
    rng = np.random.default_rng(seed)
    blocks = []
    c_in = config.in_channels
    for c_out in config.block_channels:
        layers = []
        ci = c_in
        for _ in range(config.layers_per_block):
            fan_in = ci * config.kernel ** 2
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                           size=(c_out, ci, config.kernel, config.kernel))
            layers.append(ConvParams(w.astype(dtype), np.zeros(c_out, dtype=dtype)))
            ci = c_out
        blocks.append(layers)
        c_in = c_out
    kh = config.head_kernel
    head = ConvParams(np.zeros((2, config.feature_channels, kh, kh), dtype=dtype),
                      np.zeros(2, dtype=dtype))
    return SegmenterModel(config, blocks, head)


# ---------------------------------------------------------------------------
# convolution plumbing (im2col)

def _im2col(x: np.ndarray, k: int, dilation: int) -> np.ndarray:
    """(c, h, w) -> (c * k * k, h * w) with zero padding preserving h, w."""
    c, h, w = x.shape
    if k == 1:
        return x.reshape(c, h * w)
    pad = dilation * (k // 2)
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + w] = x
    cols = np.empty((c, k * k, h, w), dtype=x.dtype)
    for i, (dy, dx) in enumerate((dy, dx) for dy in range(k) for dx in range(k)):
        oy, ox = dy * dilation, dx * dilation
        cols[:, i] = xp[:, oy:oy + h, ox:ox + w]
    return cols.reshape(c * k * k, h * w)


def _col2im(dcols: np.ndarray, shape, k: int, dilation: int) -> np.ndarray:
    c, h, w = shape
    if k == 1:
        return dcols.reshape(c, h, w)
    pad = dilation * (k // 2)
    dxp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    dcols = dcols.reshape(c, k * k, h, w)
    for i, (dy, dx) in enumerate((dy, dx) for dy in range(k) for dx in range(k)):
        oy, ox = dy * dilation, dx * dilation
        dxp[:, oy:oy + h, ox:ox + w] += dcols[:, i]
    return dxp[:, pad:pad + h, pad:pad + w]


def _conv_forward(x: np.ndarray, p: ConvParams, dilation: int):
    c_out, c_in, k, _ = p.weight.shape
    cols = _im2col(x, k, dilation)
    out = p.weight.reshape(c_out, -1) @ cols + p.bias[:, None]
    return out.reshape(c_out, x.shape[1], x.shape[2]), cols


def _conv_backward(dout: np.ndarray, cols: np.ndarray, p: ConvParams,
                   x_shape, dilation: int):
    c_out, c_in, k, _ = p.weight.shape
    g = dout.reshape(c_out, -1)
    dw = (g @ cols.T).reshape(p.weight.shape)
    db = g.sum(axis=1)
    dcols = p.weight.reshape(c_out, -1).T @ g
    dx = _col2im(dcols, x_shape, k, dilation)
    return dx, dw, db


def _softmax_fg(logits: np.ndarray) -> np.ndarray:
    """Foreground probability from (2, h, w) logits, numerically stable."""
    m = logits.max(axis=0)
    e = np.exp(logits - m)
    return e[1] / (e[0] + e[1])


# ---------------------------------------------------------------------------
# forward paths

def _trunk_features(model: SegmenterModel, x: np.ndarray, keep_caches: bool = False):
    caches = []
    outs = []
    inp = x
    for layers, dilation in zip(model.blocks, model.config.block_dilations):
        for p in layers:
            pre, cols = _conv_forward(inp, p, dilation)
            act = np.maximum(pre, 0)
            if keep_caches:
                caches.append((cols, pre > 0, inp.shape, p, dilation))
            inp = act
        outs.append(inp)
    feats = np.concatenate(outs, axis=0)
    return (feats, caches) if keep_caches else feats


def forward(model: SegmenterModel, crop: Grid2D):
    """Run the full network on a normalized, resized crop.

    Returns (FeatureCache, foreground-probability Grid2D).
    """
    if crop.channels != model.config.in_channels:
        raise DataError(f"crop has {crop.channels} channels, model expects "
                        f"{model.config.in_channels}")
    dtype = model.head.weight.dtype
    x = np.ascontiguousarray(crop.data.transpose(2, 0, 1), dtype=dtype)
    feats = _trunk_features(model, x)
    cols = _im2col(feats, model.config.head_kernel, 1)
    cache = FeatureCache(Grid2D(feats.transpose(1, 2, 0)), cols,
                         model.config_hash, model.config.head_kernel)
    return cache, _head_prob_grid(model.head, cache)


def _head_of(model_or_head) -> ConvParams:
    return model_or_head.head if isinstance(model_or_head, SegmenterModel) else model_or_head


def _check_cache(model_or_head, cache: FeatureCache):
    if isinstance(model_or_head, SegmenterModel):
        if cache.config_hash != model_or_head.config_hash:
            raise DataError("feature cache was built for a different model config")
    head = _head_of(model_or_head)
    k = head.weight.shape[2]
    if k != cache.head_kernel or head.weight.shape[1] * k * k != cache.cols.shape[0]:
        raise DataError("head shape does not match feature cache")
    return head


def _head_logits(head: ConvParams, cache: FeatureCache) -> np.ndarray:
    out = head.weight.reshape(2, -1) @ cache.cols + head.bias[:, None]
    return out.reshape(2, cache.height, cache.width)


def _head_prob_grid(head: ConvParams, cache: FeatureCache) -> Grid2D:
    return Grid2D(_softmax_fg(_head_logits(head, cache)))


def head_forward(model_or_head, cache: FeatureCache) -> Grid2D:
    """Classifier output from cached features; identical to `forward` for
    the same head parameters."""
    head = _check_cache(model_or_head, cache)
    return _head_prob_grid(head, cache)


# ---------------------------------------------------------------------------
# losses and gradients

def _as_weights(weights, h: int, w: int) -> np.ndarray:
    a = weights.plane() if isinstance(weights, Grid2D) else np.asarray(weights)
    if a.shape != (h, w):
        raise DataError("weight map dimensions disagree with labels")
    if np.any(a < 0):
        raise DataError("weights must be nonnegative")
    return a


def weighted_cross_entropy(p, labels: LabelMap, weights) -> float:
    """Per-pixel-averaged weighted cross entropy of a probability map."""
    pf = p.plane() if isinstance(p, Grid2D) else np.asarray(p)
    y = labels.labels
    w = _as_weights(weights, *y.shape)
    pf = np.clip(pf.astype(np.float64), PROB_EPS, 1.0 - PROB_EPS)
    ll = np.where(y == 1, np.log(pf), np.log1p(-pf))
    return float(-(w * ll).sum() / y.size)


def backprop_head(cache: FeatureCache, labels: LabelMap, weights,
                  model_or_head) -> HeadGradient:
    """Exact gradient of the weighted cross entropy w.r.t. head parameters.

    The loss is normalized by pixel count, matching weighted_cross_entropy.
    """
    head = _check_cache(model_or_head, cache)
    h, w = cache.height, cache.width
    if (labels.height, labels.width) != (h, w):
        raise DataError("label dimensions disagree with feature cache")
    wm = _as_weights(weights, h, w)
    logits = _head_logits(head, cache)
    p = _softmax_fg(logits)
    scale = (wm / labels.labels.size).astype(logits.dtype)
    d1 = scale * (p - labels.labels)
    delta = np.stack([-d1, d1]).reshape(2, -1)
    dw = (delta @ cache.cols.T).reshape(head.weight.shape)
    db = delta.sum(axis=1)
    return HeadGradient(dw, db)


def apply_head_step(head: ConvParams, grad: HeadGradient, lr: float):
    head.weight -= lr * grad.weight
    head.bias -= lr * grad.bias


def normalize_crop(crop: Grid2D, norm_stats) -> Grid2D:
    mean, std = norm_stats
    return Grid2D((crop.data - mean) / std)


# ---------------------------------------------------------------------------
# training

def _prepare_training_pair(crop: Grid2D, label: LabelMap, min_side: int):
    resized = resize_to_min_side(crop, min_side)
    lab = resize_labels_back(label, (resized.width, resized.height))
    return resized, lab


def compute_norm_stats(crops) -> tuple:
    """Mean/std over all pixels of all crops (whole-training-set statistics)."""
    total = 0
    s = 0.0
    s2 = 0.0
    for c in crops:
        a = c.data.astype(np.float64)
        total += a.size
        s += a.sum()
        s2 += (a * a).sum()
    mean = s / total
    var = max(s2 / total - mean * mean, 0.0)
    std = float(np.sqrt(var))
    if std < 1e-12:
        std = 1.0
    return float(mean), std


def _full_backward(model, caches, feats_shape, dlogits, head_cols):
    """Gradients for every layer given dL/dlogits; returns list aligned
    with model.parameters() order plus the head gradient last."""
    c_out = 2
    g = dlogits.reshape(c_out, -1)
    dw_head = (g @ head_cols.T).reshape(model.head.weight.shape)
    db_head = g.sum(axis=1)
    dcols = model.head.weight.reshape(c_out, -1).T @ g
    dfeats = _col2im(dcols, feats_shape, model.config.head_kernel, 1)

    # split the concatenated feature gradient back per block, then walk
    # the trunk in reverse; a block's input gradient comes from the next
    # block plus its slice of the concatenation
    splits = np.cumsum(model.config.block_channels)[:-1]
    block_grads = np.split(dfeats, splits, axis=0)
    grads = [None] * len(caches)
    layer_index = len(caches)
    dnext = None  # gradient flowing into the output of the current block
    for b in range(len(model.blocks) - 1, -1, -1):
        dout_block = block_grads[b] if dnext is None else block_grads[b] + dnext
        dact = dout_block
        for _ in range(len(model.blocks[b])):
            layer_index -= 1
            cols, relu_mask, x_shape, p, dilation = caches[layer_index]
            dpre = dact * relu_mask
            dx, dw, db = _conv_backward(dpre, cols, p, x_shape, dilation)
            grads[layer_index] = (dw, db)
            dact = dx
        dnext = dact
    return grads, (dw_head, db_head)


def _forward_loss(model: SegmenterModel, x: np.ndarray, y: np.ndarray):
    feats, caches = _trunk_features(model, x, keep_caches=True)
    head_cols = _im2col(feats, model.config.head_kernel, 1)
    logits = (model.head.weight.reshape(2, -1) @ head_cols
              + model.head.bias[:, None]).reshape(2, *x.shape[1:])
    p = _softmax_fg(logits)
    pf = np.clip(p.astype(np.float64), PROB_EPS, 1.0 - PROB_EPS)
    loss = float(-np.where(y == 1, np.log(pf), np.log1p(-pf)).mean())
    d1 = ((p - y) / y.size).astype(logits.dtype)
    dlogits = np.stack([-d1, d1])
    return loss, caches, feats.shape, dlogits, head_cols


def train(dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0,
          model_config: ModelConfig = ModelConfig()) -> SegmenterModel:
    """Train from scratch on (crop, binary label) pairs.

    Crops are resized so their short side matches the model's input size,
    normalized by whole-training-set statistics (stored in the model),
    and visited one random sample per SGD step. The per-iteration loss
    curve is recorded on the returned model.
    """
    dataset = list(dataset)
    if not dataset:
        raise DataError("empty dataset")
    rng = np.random.default_rng(seed)
    model = init_model(model_config, seed=rng.integers(2 ** 31))

    pairs = [_prepare_training_pair(c, l, model_config.min_side) for c, l in dataset]
    stats = compute_norm_stats([c for c, _ in pairs])
    model.norm_stats = stats
    samples = [(np.ascontiguousarray(normalize_crop(c, stats).data.transpose(2, 0, 1),
                                     dtype=np.float32), l.labels)
               for c, l in pairs]

    params = list(model.parameters())
    velocity = [(np.zeros_like(p.weight), np.zeros_like(p.bias)) for p in params]
    losses = np.empty(cfg.max_iterations, dtype=np.float32)

    for t in range(cfg.max_iterations):
        lr = cfg.rate_at(t)
        agg = None
        loss_t = 0.0
        for _ in range(cfg.batch_size):
            x, y = samples[int(rng.integers(len(samples)))]
            loss, caches, fshape, dlogits, head_cols = _forward_loss(model, x, y)
            loss_t += loss / cfg.batch_size
            grads, head_grad = _full_backward(model, caches, fshape, dlogits, head_cols)
            flat = grads + [head_grad]
            if agg is None:
                agg = flat
            else:
                agg = [(a[0] + g[0], a[1] + g[1]) for a, g in zip(agg, flat)]
        if not np.isfinite(loss_t):
            raise NumericError(f"NaN/inf training loss at iteration {t} (lr={lr:g})")
        losses[t] = loss_t
        inv = 1.0 / cfg.batch_size
        for p, v, (dw, db) in zip(params, velocity, agg):
            vw, vb = v
            vw *= cfg.momentum
            vw -= lr * (dw * inv + cfg.weight_decay * p.weight)
            vb *= cfg.momentum
            vb -= lr * (db * inv + cfg.weight_decay * p.bias)
            p.weight += vw
            p.bias += vb

    model.loss_curve = losses
    return model


# ---------------------------------------------------------------------------
# model artifact I/O: versioned binary container

def _model_arrays(model: SegmenterModel):
    for b, layers in enumerate(model.blocks):
        for l, p in enumerate(layers):
            yield f"block{b}.{l}.weight", p.weight
            yield f"block{b}.{l}.bias", p.bias
    yield "head.weight", model.head.weight
    yield "head.bias", model.head.bias


def save_model(path, model: SegmenterModel):
    arrays = list(_model_arrays(model))
    manifest = {
        "config": asdict(model.config),
        "norm_stats": [float(model.norm_stats[0]), float(model.norm_stats[1])],
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_MODEL_MAGIC)
        f.write(struct.pack("<II", _MODEL_VERSION, len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_model(path) -> SegmenterModel:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    if data[:4] != _MODEL_MAGIC:
        raise DataError(f"{path}: not a model artifact")
    version, blob_len = struct.unpack_from("<II", data, 4)
    if version != _MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    manifest = json.loads(data[12:12 + blob_len])
    cfg_dict = manifest["config"]
    cfg_dict["block_channels"] = tuple(cfg_dict["block_channels"])
    cfg_dict["block_dilations"] = tuple(cfg_dict["block_dilations"])
    config = ModelConfig(**cfg_dict)
    offset = 12 + blob_len
    arrays = {}
    for spec in manifest["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape))
        a = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        arrays[spec["name"]] = a.copy()
        offset += 4 * count
    model = init_model(config)
    for b, layers in enumerate(model.blocks):
        for l, p in enumerate(layers):
            p.weight = arrays[f"block{b}.{l}.weight"]
            p.bias = arrays[f"block{b}.{l}.bias"]
    model.head = ConvParams(arrays["head.weight"], arrays["head.bias"])
    model.norm_stats = (manifest["norm_stats"][0], manifest["norm_stats"][1])
    return model
