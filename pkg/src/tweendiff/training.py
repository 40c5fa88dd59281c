"""Training loops: pretrain the forward denoiser, then adapt it to backward motion.

Pretraining is ordinary v-prediction regression conditioned on the first
frame. The backward fine-tune clones the pretrained network, freezes all of
it except the chosen temporal-attention projections, and regresses the
time-flipped target while injecting the 180-degree rotated attention maps
extracted from the frozen forward network on the unflipped latent. The
rotated maps pin the backward trajectory to the exact reverse of the forward
one, so only content synthesis (value/output projections) needs to adapt.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .data import VideoClip
from .errors import ConfigurationError, DivergenceError, NumericError
from .model import (
    EXTRACT_PLAN,
    AttentionPlan,
    ModelConfig,
    VideoDenoiser,
    set_trainable,
)
from .schedule import NoiseSchedule, corrupt, encode_frames, v_target
from .temporal import flip_time, rotate_set

FINETUNE_MODES = ("full", "wo_ra")

# Each fine-tune mode pins its trainable set: rotated-map injection only makes
# sense when Q/K stay frozen, and the no-injection ablation tunes all four.
POLICY_FOR_MODE = {"full": "temporal_vo_only", "wo_ra": "temporal_qkvo_only"}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-2
    batch_size: int = 4
    iterations: int = 2000
    seed: int = 0
    v_target_mode: str = "clean"
    policy: str = "all"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")


def _make_optimizer(model: VideoDenoiser, cfg: TrainConfig) -> torch.optim.Optimizer:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.AdamW(
        params,
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )


def _stack_latents(clips: list[VideoClip]) -> torch.Tensor:
    if not clips:
        raise ValueError("training needs a non-empty dataset")
    return encode_frames(torch.stack([c.frames for c in clips]))


def _draw_batch(
    latents: torch.Tensor, cfg: TrainConfig, sched: NoiseSchedule, gen: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    idx = torch.randint(0, latents.shape[0], (cfg.batch_size,), generator=gen)
    z = latents[idx]
    t = torch.randint(1, sched.T + 1, (cfg.batch_size,), generator=gen)
    eps = torch.randn(z.shape, generator=gen)
    return z, t, eps


def _check_loss(loss: torch.Tensor, step: int) -> float:
    value = loss.item()
    if not torch.isfinite(loss):
        raise DivergenceError(f"loss became non-finite at step {step}")
    return value


def pretrain_forward(
    clips: list[VideoClip],
    cfg: TrainConfig,
    sched: NoiseSchedule,
    model_config: ModelConfig | None = None,
    progress=None,
) -> tuple[VideoDenoiser, list[tuple[int, float]]]:
    """Train the forward image-to-video denoiser from scratch.

    Conditioning is the first frame of each clip; every parameter trains.
    Returns the model and a step-indexed loss log.
    """
    if cfg.policy != "all":
        raise ConfigurationError("pretraining trains all parameters; set policy='all'")
    latents = _stack_latents(clips)
    _, n, c, h, w = latents.shape
    model_config = model_config or ModelConfig(frames=n, data_channels=c)
    model = VideoDenoiser(model_config, init_seed=cfg.seed)
    set_trainable(model, "all")
    opt = _make_optimizer(model, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)

    log: list[tuple[int, float]] = []
    for step in range(cfg.iterations):
        z, t, eps = _draw_batch(latents, cfg, sched, gen)
        z_t = corrupt(z, t, eps, sched)
        target = v_target(z, eps, t, sched, cfg.v_target_mode)
        try:
            v_hat, _ = model(z_t.z, t, z[:, 0])
        except NumericError as exc:
            raise DivergenceError(f"training diverged at step {step}: {exc}") from exc
        loss = F.mse_loss(v_hat, target)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append((step, _check_loss(loss, step)))
        if progress is not None:
            progress(step, log[-1][1])
    return model, log


def finetune_backward(
    forward_model: VideoDenoiser,
    clips: list[VideoClip],
    cfg: TrainConfig,
    sched: NoiseSchedule,
    mode: str = "full",
    progress=None,
) -> tuple[VideoDenoiser, list[tuple[int, float]]]:
    """Adapt a frozen forward model to backward motion.

    mode "full": extract attention maps from the frozen forward pass, rotate
    them 180 degrees, inject them into the clone, and train only the value and
    output projections. mode "wo_ra": no injection, all four temporal
    projections train. The forward model is never modified.
    """
    if mode not in FINETUNE_MODES:
        raise ConfigurationError(f"unknown fine-tune mode {mode!r}; available: {FINETUNE_MODES}")
    required = POLICY_FOR_MODE[mode]
    policy = required if cfg.policy == "all" else cfg.policy
    if policy != required:
        raise ConfigurationError(
            f"mode {mode!r} requires trainable policy {required!r}, got {policy!r}; "
            "value/output-only training is only sound with rotated-map injection"
        )
    latents = _stack_latents(clips)

    model = copy.deepcopy(forward_model)
    set_trainable(model, required)
    opt = _make_optimizer(model, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)

    log: list[tuple[int, float]] = []
    for step in range(cfg.iterations):
        z, t, eps = _draw_batch(latents, cfg, sched, gen)
        z_t = corrupt(z, t, eps, sched)

        plan = None
        if mode == "full":
            with torch.no_grad():
                _, maps = forward_model(z_t.z, t, z[:, 0], EXTRACT_PLAN)
            plan = AttentionPlan(mode="inject", maps=rotate_set(maps))

        z_t_flipped = flip_time(z_t.z, 1)
        target = v_target(flip_time(z, 1), flip_time(eps, 1), t, sched, cfg.v_target_mode)
        try:
            v_hat, _ = model(z_t_flipped, t, z[:, -1], plan)
        except NumericError as exc:
            raise DivergenceError(f"fine-tuning diverged at step {step}: {exc}") from exc
        loss = F.mse_loss(v_hat, target)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append((step, _check_loss(loss, step)))
        if progress is not None:
            progress(step, log[-1][1])
    return model, log
