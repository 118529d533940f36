import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bifseg.grid import Grid2D
from bifseg.model import ModelConfig, init_model


TINY_CONFIG = ModelConfig(block_channels=(3, 3), block_dilations=(1, 2),
                          layers_per_block=1, kernel=3, head_kernel=1, min_side=8)


@pytest.fixture
def tiny_model():
    """Small random model with a non-zero head (probabilities off 0.5)."""
    model = init_model(TINY_CONFIG, seed=1)
    rng = np.random.default_rng(2)
    model.head.weight = rng.normal(0, 0.5, model.head.weight.shape).astype(np.float32)
    model.head.bias = rng.normal(0, 0.5, model.head.bias.shape).astype(np.float32)
    model.norm_stats = (0.5, 0.25)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_grid(rng, h, w, lo=0.0, hi=1.0, dtype=np.float32):
    return Grid2D(rng.uniform(lo, hi, (h, w)).astype(dtype))
