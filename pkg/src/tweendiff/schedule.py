"""Discrete variance-preserving noise schedule and v-parameterization algebra.

The forward corruption is z_t = alpha_t * z + sigma_t * eps with
alpha_t^2 + sigma_t^2 = 1, so a prediction of v can be inverted exactly:

    z0_hat  = alpha_t * z_t - sigma_t * v
    eps_hat = sigma_t * z_t + alpha_t * v

Both training and sampling run off the same table, indexed by an integer
step t in [0, T] with t = 0 the clean-data boundary (alpha_0 = 1, sigma_0 = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .errors import ConfigurationError

# Terminal alpha floor: keeps the last step invertible instead of fully degenerate.
ALPHA_FLOOR = 1e-3

SCHEDULE_FAMILIES = ("cosine",)

V_TARGET_MODES = ("clean", "literal")


class NoisyLatent(NamedTuple):
    """A latent at a known noise level. `t` is an int or a per-sample int tensor."""

    z: torch.Tensor
    t: int | torch.Tensor


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alphas: torch.Tensor  # [T+1], strictly decreasing, alpha_0 = 1
    sigmas: torch.Tensor  # [T+1], strictly increasing, sigma_0 = 0

    def coef(self, t: int | torch.Tensor, ndim: int) -> tuple[torch.Tensor, torch.Tensor]:
        """(alpha_t, sigma_t) shaped to broadcast against an `ndim`-dim tensor.

        Scalar t broadcasts over everything; a 1-D int tensor is treated as
        per-sample steps for a batch-leading tensor.
        """
        alpha, sigma = self.alphas[t], self.sigmas[t]
        if isinstance(t, torch.Tensor) and t.dim() > 0:
            shape = (t.shape[0],) + (1,) * (ndim - 1)
            alpha, sigma = alpha.view(shape), sigma.view(shape)
        return alpha, sigma


def build_schedule(T: int, family: str = "cosine") -> NoiseSchedule:
    """Build the discrete (alpha_t, sigma_t) table for steps 0..T."""
    if T < 1:
        raise ValueError(f"schedule needs T >= 1, got {T}")
    if family not in SCHEDULE_FAMILIES:
        raise ConfigurationError(
            f"unknown schedule family {family!r}; available: {', '.join(SCHEDULE_FAMILIES)}"
        )
    grid = np.arange(T + 1, dtype=np.float64) / T
    alphas = np.cos(0.5 * math.pi * grid)
    alphas = np.maximum(alphas, ALPHA_FLOOR)
    sigmas = np.sqrt(1.0 - alphas**2)
    if not (np.diff(alphas) < 0).all():
        raise ConfigurationError(
            f"alpha floor {ALPHA_FLOOR} flattens the schedule tail at T={T}; use a smaller T"
        )
    return NoiseSchedule(
        T=T,
        alphas=torch.from_numpy(alphas.astype(np.float32)),
        sigmas=torch.from_numpy(sigmas.astype(np.float32)),
    )


def _check_shapes(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def corrupt(
    z: torch.Tensor, t: int | torch.Tensor, eps: torch.Tensor, sched: NoiseSchedule
) -> NoisyLatent:
    """Forward-corrupt a clean latent to noise level t: alpha_t * z + sigma_t * eps."""
    _check_shapes(z, eps, "corrupt")
    alpha, sigma = sched.coef(t, z.dim())
    return NoisyLatent(alpha * z + sigma * eps, t)


def v_target(
    z: torch.Tensor,
    eps: torch.Tensor,
    t: int | torch.Tensor,
    sched: NoiseSchedule,
    mode: str = "clean",
) -> torch.Tensor:
    """Regression target for the denoiser at step t.

    "clean" is the standard parameterization v = alpha_t * eps - sigma_t * z,
    a rotation of (noise, data) that invert_v undoes exactly. "literal"
    substitutes the noisy latent z_t for z in the second term; it is kept as a
    switchable variant for comparison, not as the default.
    """
    _check_shapes(z, eps, "v_target")
    alpha, sigma = sched.coef(t, z.dim())
    if mode == "clean":
        return alpha * eps - sigma * z
    if mode == "literal":
        z_t = alpha * z + sigma * eps
        return alpha * eps - sigma * z_t
    raise ConfigurationError(f"unknown v_target mode {mode!r}; available: {V_TARGET_MODES}")


def invert_v(
    z_t: NoisyLatent, v: torch.Tensor, sched: NoiseSchedule
) -> tuple[torch.Tensor, torch.Tensor]:
    """Recover (z0_hat, eps_hat) from a noisy latent and a v prediction."""
    _check_shapes(z_t.z, v, "invert_v")
    alpha, sigma = sched.coef(z_t.t, v.dim())
    z0_hat = alpha * z_t.z - sigma * v
    eps_hat = sigma * z_t.z + alpha * v
    return z0_hat, eps_hat


def encode_frames(frames: torch.Tensor) -> torch.Tensor:
    """Pixels in [0, 1] -> diffusion latents in [-1, 1] (identity codec)."""
    return frames * 2.0 - 1.0


def decode_latent(z: torch.Tensor) -> torch.Tensor:
    """Diffusion latents -> pixels, clamped back into [0, 1]."""
    return ((z + 1.0) * 0.5).clamp(0.0, 1.0)
