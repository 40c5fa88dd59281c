"""Samplers: deterministic v-space updates, per-step recurrence, and fusion.

The dual-direction sampler denoises one latent under two synchronized views:
the forward model predicts from the first keyframe while its attention maps
are extracted; the backward model predicts from the last keyframe on the
time-flipped latent with the 180-degree rotated maps injected. The backward
prediction is flipped back and averaged with the forward one before each
update. Per-step recurrence re-noises the update back to the current level
and repeats the fused denoising to tighten the agreement.

Baseline and ablation modes reuse the same loop with different prediction
functions: the two-ended baseline runs the forward model in both directions
with no injection; "wo_ft" injects (up blocks only) into the untuned forward
model; "wo_ra" uses a fully fine-tuned backward model without injection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import torch

from .data import VideoClip
from .errors import ConfigurationError, NumericError
from .model import AttentionPlan, EXTRACT_PLAN, VideoDenoiser
from .schedule import (
    NoiseSchedule,
    NoisyLatent,
    decode_latent,
    encode_frames,
    invert_v,
)
from .temporal import flip_time, rotate_set

SAMPLER_MODES = ("forward_only", "dual", "trf_baseline", "wo_ft", "wo_ra")
FUSION_RULES = ("mean",)


@dataclass
class SamplerConfig:
    steps: int = 50
    recurrence: int = 5
    fusion: str = "mean"
    seed: int = 0
    mode: str = "dual"

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.recurrence < 1:
            raise ConfigurationError("recurrence must be >= 1")
        if self.mode not in SAMPLER_MODES:
            raise ConfigurationError(f"unknown sampler mode {self.mode!r}; available: {SAMPLER_MODES}")
        if self.fusion not in FUSION_RULES:
            raise ConfigurationError(f"unknown fusion rule {self.fusion!r}; available: {FUSION_RULES}")


def update(z_t: NoisyLatent, v_hat: torch.Tensor, sched: NoiseSchedule) -> NoisyLatent:
    """One deterministic denoising step: reproject (z0_hat, eps_hat) at level t-1."""
    t = int(z_t.t)
    if t < 1:
        raise ValueError("update needs t >= 1; the latent is already clean")
    z0_hat, eps_hat = invert_v(z_t, v_hat, sched)
    z_prev = sched.alphas[t - 1] * z0_hat + sched.sigmas[t - 1] * eps_hat
    return NoisyLatent(z_prev, t - 1)


def renoise(z_prev: NoisyLatent, sched: NoiseSchedule, gen: torch.Generator) -> NoisyLatent:
    """Re-inject Gaussian noise to lift a level-(t-1) latent back to level t."""
    t = int(z_prev.t) + 1
    if t > sched.T:
        raise ValueError(f"cannot renoise above the schedule top (t={t}, T={sched.T})")
    ratio = float(sched.alphas[t] / sched.alphas[t - 1])
    gap = float(sched.sigmas[t]) ** 2 - ratio**2 * float(sched.sigmas[t - 1]) ** 2
    if gap < 0:
        raise NumericError(f"negative renoise variance at t={t}; schedule is not monotone")
    eps = torch.randn(z_prev.z.shape, generator=gen, dtype=z_prev.z.dtype)
    return NoisyLatent(ratio * z_prev.z + math.sqrt(gap) * eps, t)


def fuse(v_fwd: torch.Tensor, v_bwd_flipped: torch.Tensor, rule: str = "mean") -> torch.Tensor:
    """Combine the two directional predictions; the mean rule averages them."""
    if v_fwd.shape != v_bwd_flipped.shape:
        raise ValueError(
            f"fuse: shape mismatch {tuple(v_fwd.shape)} vs {tuple(v_bwd_flipped.shape)}"
        )
    if rule != "mean":
        raise ConfigurationError(f"unknown fusion rule {rule!r}; available: {FUSION_RULES}")
    return (v_fwd + v_bwd_flipped) / 2


PredictFn = Callable[[NoisyLatent], torch.Tensor]


def _denoise_loop(
    predict: PredictFn,
    z_init: torch.Tensor,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
    gen: torch.Generator,
) -> torch.Tensor:
    state = NoisyLatent(z_init, sched.T)
    for t in range(sched.T, 0, -1):
        repeats = cfg.recurrence if t > 1 else 1
        for rep in range(repeats):
            v_hat = predict(state)
            stepped = update(state, v_hat, sched)
            if not torch.isfinite(stepped.z).all():
                raise NumericError(f"non-finite latent at sampling step t={t}")
            state = renoise(stepped, sched, gen) if rep + 1 < repeats else stepped
    return state.z


def _as_batch(frame: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if frame.dim() == 3:
        return frame.unsqueeze(0), True
    if frame.dim() == 4:
        return frame, False
    raise ValueError(f"keyframes must be [C, H, W] or [B, C, H, W], got {tuple(frame.shape)}")


def _check_pair(fwd: VideoDenoiser, bwd) -> None:
    if isinstance(bwd, VideoDenoiser) and bwd.config != fwd.config:
        raise ConfigurationError(
            "forward and backward models disagree on architecture: "
            f"{fwd.config} vs {bwd.config}"
        )


def _clips_from_latent(z0: torch.Tensor, cfg: SamplerConfig, single: bool):
    clips = [
        VideoClip(decode_latent(z), generator=f"sampled:{cfg.mode}", seed=cfg.seed)
        for z in z0
    ]
    return clips[0] if single else clips


def _sample(
    predict_builder,
    first: torch.Tensor,
    fwd: VideoDenoiser,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
):
    if cfg.steps != sched.T:
        raise ConfigurationError(
            f"sampler configured for {cfg.steps} steps but the schedule has T={sched.T}"
        )
    frames_b, single = _as_batch(first)
    b, c, h, w = frames_b.shape
    mc = fwd.config
    gen = torch.Generator().manual_seed(cfg.seed)
    with torch.no_grad():
        predict = predict_builder(frames_b)
        z_init = torch.randn((b, mc.frames, c, h, w), generator=gen)
        z0 = _denoise_loop(predict, z_init, cfg, sched, gen)
    return _clips_from_latent(z0, cfg, single)


def sample_forward_only(
    first: torch.Tensor, fwd: VideoDenoiser, cfg: SamplerConfig, sched: NoiseSchedule
):
    """Plain image-to-video rollout from the first keyframe."""
    if cfg.mode != "forward_only":
        raise ConfigurationError(f"config mode is {cfg.mode!r}, expected 'forward_only'")

    def build(frames_b: torch.Tensor) -> PredictFn:
        cond = encode_frames(frames_b)

        def predict(state: NoisyLatent) -> torch.Tensor:
            v_hat, _ = fwd(state.z, state.t, cond)
            return v_hat

        return predict

    return _sample(build, first, fwd, cfg, sched)


def sample_dual(
    first: torch.Tensor,
    last: torch.Tensor,
    fwd: VideoDenoiser,
    bwd,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
):
    """Dual-direction sampling with rotated-map injection into the backward model."""
    if cfg.mode != "dual":
        raise ConfigurationError(f"config mode is {cfg.mode!r}, expected 'dual'")
    _check_pair(fwd, bwd)

    def build(frames_b: torch.Tensor) -> PredictFn:
        cond_first = encode_frames(frames_b)
        cond_last = encode_frames(_as_batch(last)[0])

        def predict(state: NoisyLatent) -> torch.Tensor:
            v_fwd, maps = fwd(state.z, state.t, cond_first, EXTRACT_PLAN)
            plan = AttentionPlan(mode="inject", maps=rotate_set(maps))
            v_bwd, _ = bwd(flip_time(state.z, 1), state.t, cond_last, plan)
            return fuse(v_fwd, flip_time(v_bwd, 1), cfg.fusion)

        return predict

    return _sample(build, first, fwd, cfg, sched)


def sample_trf_baseline(
    first: torch.Tensor,
    last: torch.Tensor,
    fwd: VideoDenoiser,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
):
    """Two-ended baseline: the forward model serves both directions, no injection."""
    if cfg.mode != "trf_baseline":
        raise ConfigurationError(f"config mode is {cfg.mode!r}, expected 'trf_baseline'")

    def build(frames_b: torch.Tensor) -> PredictFn:
        cond_first = encode_frames(frames_b)
        cond_last = encode_frames(_as_batch(last)[0])

        def predict(state: NoisyLatent) -> torch.Tensor:
            v_fwd, _ = fwd(state.z, state.t, cond_first)
            v_bwd, _ = fwd(flip_time(state.z, 1), state.t, cond_last)
            return fuse(v_fwd, flip_time(v_bwd, 1), cfg.fusion)

        return predict

    return _sample(build, first, fwd, cfg, sched)


def sample_wo_ft(
    first: torch.Tensor,
    last: torch.Tensor,
    fwd: VideoDenoiser,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
):
    """Ablation: untuned backward branch, rotated maps injected in up blocks only."""
    if cfg.mode != "wo_ft":
        raise ConfigurationError(f"config mode is {cfg.mode!r}, expected 'wo_ft'")

    def build(frames_b: torch.Tensor) -> PredictFn:
        cond_first = encode_frames(frames_b)
        cond_last = encode_frames(_as_batch(last)[0])

        def predict(state: NoisyLatent) -> torch.Tensor:
            v_fwd, maps = fwd(state.z, state.t, cond_first, EXTRACT_PLAN)
            plan = AttentionPlan(
                mode="inject", maps=rotate_set(maps), blocks=frozenset({"up"})
            )
            v_bwd, _ = fwd(flip_time(state.z, 1), state.t, cond_last, plan)
            return fuse(v_fwd, flip_time(v_bwd, 1), cfg.fusion)

        return predict

    return _sample(build, first, fwd, cfg, sched)


def sample_wo_ra(
    first: torch.Tensor,
    last: torch.Tensor,
    fwd: VideoDenoiser,
    bwd,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
):
    """Ablation: fully fine-tuned backward model, no map injection."""
    if cfg.mode != "wo_ra":
        raise ConfigurationError(f"config mode is {cfg.mode!r}, expected 'wo_ra'")
    _check_pair(fwd, bwd)

    def build(frames_b: torch.Tensor) -> PredictFn:
        cond_first = encode_frames(frames_b)
        cond_last = encode_frames(_as_batch(last)[0])

        def predict(state: NoisyLatent) -> torch.Tensor:
            v_fwd, _ = fwd(state.z, state.t, cond_first)
            v_bwd, _ = bwd(flip_time(state.z, 1), state.t, cond_last)
            return fuse(v_fwd, flip_time(v_bwd, 1), cfg.fusion)

        return predict

    return _sample(build, first, fwd, cfg, sched)


def sample(
    mode: str,
    first: torch.Tensor,
    last: torch.Tensor | None,
    fwd: VideoDenoiser,
    bwd,
    cfg: SamplerConfig,
    sched: NoiseSchedule,
):
    """Dispatch on mode; `last` and `bwd` are required by the modes that use them."""
    if mode != cfg.mode:
        raise ConfigurationError(f"mode {mode!r} does not match config mode {cfg.mode!r}")
    if mode == "forward_only":
        return sample_forward_only(first, fwd, cfg, sched)
    if mode == "dual":
        return sample_dual(first, last, fwd, bwd, cfg, sched)
    if mode == "trf_baseline":
        return sample_trf_baseline(first, last, fwd, cfg, sched)
    if mode == "wo_ft":
        return sample_wo_ft(first, last, fwd, cfg, sched)
    if mode == "wo_ra":
        return sample_wo_ra(first, last, fwd, bwd, cfg, sched)
    raise ConfigurationError(f"unknown sampler mode {mode!r}")
