import numpy as np
import pytest

from structattn import GridShape, ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**overrides):
    """ViT-Tiny-like configuration: 8x8 tokens, D=192, 3 heads of width 64."""
    base = dict(
        grid=GridShape(8, 8),
        dim=192,
        heads=3,
        layers=12,
        d_head=64,
        filter_size=3,
        padding="zero",
        scale_mode="inv_sqrt_d",
        alpha=40.0,
        beta=1.0,
        gamma=2.0,
        pos_std=0.02,
        seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def paper_config():
    return tiny_config()


@pytest.fixture
def one_layer_config():
    return tiny_config(layers=1)
