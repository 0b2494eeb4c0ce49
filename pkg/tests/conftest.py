"""Shared fixtures: seeded images, masks, and tiny models."""

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from declutter.imaging import ElementMask, MaskSet
from declutter.inpaint import Generator
from declutter.scoring import ScoreModel, TinyBackbone

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _single_thread_torch():
    # keeps float reductions deterministic across runs and machines
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_image(rng):
    return rng.uniform(0.0, 1.0, size=(24, 20, 3))


@pytest.fixture
def two_element_masks():
    """Two disjoint rectangles on a 24x20 grid."""
    a = np.zeros((24, 20), dtype=np.uint8)
    a[2:8, 3:9] = 1
    b = np.zeros((24, 20), dtype=np.uint8)
    b[14:21, 10:17] = 1
    return MaskSet(
        masks=[
            ElementMask(index=1, label=3, mask=a),
            ElementMask(index=2, label=82, mask=b),
        ],
        height=24,
        width=20,
    ).validate()


@pytest.fixture(scope="session")
def tiny_score_model():
    return ScoreModel(
        TinyBackbone(channels=(4, 8), seed=0),
        input_resolution=32,
        kernel_size=5,
        kernel_variance=1.0,
        seed=0,
    )


@pytest.fixture(scope="session")
def tiny_generator():
    return Generator(
        encoder_channels=(8, 8, 16, 16),
        decoder_channels=(16, 16, 8, 6, 3),
        confidence_hidden=4,
        native_resolution=32,
        seed=0,
    )
