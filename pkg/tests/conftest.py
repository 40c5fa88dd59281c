import pytest
import torch

from tweendiff.data import generate_dataset
from tweendiff.model import ModelConfig, VideoDenoiser
from tweendiff.schedule import build_schedule

# Micro architecture: 2 frames at 4x4, small widths. Big enough to exercise
# every code path, small enough for finite-difference sweeps.
MICRO = ModelConfig(frames=2, data_channels=1, base_channels=8, head_dim=4, time_dim=8)

# Small-but-video-like scale used where the micro model is too degenerate.
SMALL = ModelConfig(frames=6, data_channels=3, base_channels=8, head_dim=8, time_dim=16)


@pytest.fixture(scope="session")
def sched10():
    return build_schedule(10)


@pytest.fixture(scope="session")
def sched50():
    return build_schedule(50)


@pytest.fixture()
def micro_model():
    return VideoDenoiser(MICRO, init_seed=0)


@pytest.fixture()
def small_model():
    return VideoDenoiser(SMALL, init_seed=0)


@pytest.fixture(scope="session")
def tiny_clips():
    return generate_dataset("accel_ball", 3, SMALL.frames, 8, 8, seed=0)


def rand_latent(config: ModelConfig, batch: int, size: int, seed: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(
        (batch, config.frames, config.data_channels, size, size), generator=gen
    )


def rand_cond(config: ModelConfig, batch: int, size: int, seed: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.randn((batch, config.data_channels, size, size), generator=gen)
