from __future__ import annotations

import numpy as np
import pytest
import torch

from panseg.config import ModelConfig
from panseg.structures import Detection


@pytest.fixture
def single_thread():
    """Bitwise-determinism tests pin torch to one thread."""
    previous = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(previous)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(n_att=8, c_att=50.0, n_things=3, n_stuff=2,
                       f_dim=16, backbone_width=8, head_width=16)


def random_detection(rng: np.random.Generator, image_size: int = 256) -> Detection:
    w = float(rng.uniform(8, image_size / 2))
    h = float(rng.uniform(8, image_size / 2))
    x = float(rng.uniform(w / 2, image_size - w / 2))
    y = float(rng.uniform(h / 2, image_size - h / 2))
    return Detection(class_id=int(rng.integers(0, 3)),
                     score=float(rng.uniform(0.05, 1.0)), box=(x, y, w, h))
