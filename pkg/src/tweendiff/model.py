"""Video denoiser: 2D conv blocks interleaved with temporal self-attention.

The network predicts v for a noisy video latent [B, N, C, H, W], conditioned
on a single frame (replicated over time and concatenated channel-wise) and an
integer noise step. Spatial processing folds frames into the batch; each
temporal self-attention layer reshapes to [B*H*W, N, C] so attention runs
purely along the frame axis, one N x N map of logits per spatial site.

Every temporal attention layer is registered under a stable id and supports
three modes per forward pass: compute its own inter-frame logits, compute and
hand them back (extract), or skip Q/K entirely and reuse logits supplied by
the caller (inject). Injection is what lets a second network reproduce the
exact time-reversed motion of a first one.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .container import read_container, split_arrays, write_container
from .errors import ConfigurationError, DataFormatError, NumericError

BLOCK_GROUPS = ("down", "mid", "up")
TRAIN_POLICIES = ("all", "temporal_vo_only", "temporal_qkvo_only")
NORM_GROUPS = 4


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 16
    data_channels: int = 3
    base_channels: int = 32
    head_dim: int = 32
    time_dim: int = 64

    def __post_init__(self) -> None:
        if self.base_channels % NORM_GROUPS != 0:
            raise ConfigurationError(f"base_channels must be a multiple of {NORM_GROUPS}")
        if self.frames < 1:
            raise ConfigurationError("frames must be >= 1")

    @property
    def arch_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("ascii")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class AttentionPlan:
    """Per-pass attention behaviour.

    mode "compute" runs attention normally; "extract" additionally returns
    every layer's pre-softmax logits; "inject" replaces the logits of each
    layer that both appears in `maps` (keyed by layer id, shaped
    [B, H*W, N, N] to match what extract returns) and belongs to a block
    group in `blocks`. Layers outside the injection set compute normally.
    """

    mode: str = "compute"
    maps: Mapping[str, torch.Tensor] | None = None
    blocks: frozenset = frozenset(BLOCK_GROUPS)

    def __post_init__(self) -> None:
        if self.mode not in ("compute", "extract", "inject"):
            raise ConfigurationError(f"unknown attention plan mode {self.mode!r}")
        if self.mode == "inject" and self.maps is None:
            raise ValueError("inject plan needs attention maps")
        if not set(self.blocks) <= set(BLOCK_GROUPS):
            raise ConfigurationError(f"unknown block groups {set(self.blocks) - set(BLOCK_GROUPS)}")

    def layer_mode(self, layer_id: str, group: str) -> str:
        if self.mode == "inject":
            return "inject" if group in self.blocks else "compute"
        return self.mode


COMPUTE_PLAN = AttentionPlan()
EXTRACT_PLAN = AttentionPlan(mode="extract")


def sinusoidal_embedding(t: torch.Tensor, dim: int, dtype: torch.dtype) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        torch.arange(half, dtype=dtype, device=t.device) * (-math.log(10000.0) / (half - 1))
    )
    angles = t.to(dtype)[:, None] * freqs[None, :]
    return torch.cat([angles.sin(), angles.cos()], dim=-1)


class TemporalSelfAttention(nn.Module):
    """Single-head attention over the frame axis at one spatial resolution."""

    def __init__(self, layer_id: str, group: str, channels: int, head_dim: int, frames: int):
        super().__init__()
        self.layer_id = layer_id
        self.group = group
        self.channels = channels
        self.head_dim = head_dim
        self.frames = frames
        self.to_q = nn.Linear(channels, head_dim, bias=False)
        self.to_k = nn.Linear(channels, head_dim, bias=False)
        self.to_v = nn.Linear(channels, head_dim, bias=False)
        self.to_out = nn.Linear(head_dim, channels, bias=False)
        self.pos_embed = nn.Parameter(torch.zeros(frames, channels))

    def forward(
        self, h: torch.Tensor, batch: int, plan: AttentionPlan
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        """h: [B*N, C, H, W] -> (same shape, logits [B, H*W, N, N] if extracting)."""
        bn, c, height, width = h.shape
        n, sites = self.frames, height * width
        base = (
            h.view(batch, n, c, height, width)
            .permute(0, 3, 4, 1, 2)
            .reshape(batch * sites, n, c)
        )
        x = base + self.pos_embed
        value = self.to_v(x)

        mode = plan.layer_mode(self.layer_id, self.group)
        injected = plan.maps.get(self.layer_id) if mode == "inject" else None
        if injected is not None:
            expected = (batch, sites, n, n)
            if tuple(injected.shape) != expected:
                raise ValueError(
                    f"injected map for {self.layer_id!r} has shape "
                    f"{tuple(injected.shape)}, expected {expected}"
                )
            logits = injected.reshape(batch * sites, n, n)
        else:
            query = self.to_q(x)
            key = self.to_k(x)
            logits = query @ key.transpose(-2, -1)

        weights = F.softmax(logits / math.sqrt(self.head_dim), dim=-1)
        out = self.to_out(weights @ value)
        result = (
            (base + out)
            .view(batch, height, width, n, c)
            .permute(0, 3, 4, 1, 2)
            .reshape(bn, c, height, width)
        )
        # One cheap reduction: any NaN/Inf in the block propagates into the sum.
        if not torch.isfinite(result.sum()):
            raise NumericError(f"non-finite activations in temporal attention {self.layer_id!r}")
        extracted = logits.view(batch, sites, n, n) if mode == "extract" else None
        return result, extracted


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(NORM_GROUPS, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(NORM_GROUPS, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, h: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        x = self.conv1(F.silu(self.norm1(h)))
        x = x + self.time_proj(F.silu(temb))[:, :, None, None]
        x = self.conv2(F.silu(self.norm2(x)))
        return x + self.skip(h)


class VideoDenoiser(nn.Module):
    """Two down blocks, one mid, two up; one temporal attention layer each."""

    def __init__(self, config: ModelConfig, init_seed: int = 0):
        super().__init__()
        self.config = config
        c0 = config.base_channels
        c1 = 2 * c0
        td = config.time_dim
        att = lambda lid, grp, ch: TemporalSelfAttention(
            lid, grp, ch, config.head_dim, config.frames
        )

        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))
        self.stem = nn.Conv2d(2 * config.data_channels, c0, 3, padding=1)
        self.down1_res = ResBlock(c0, c0, td)
        self.down1_attn = att("down1", "down", c0)
        self.downsample1 = nn.Conv2d(c0, c1, 3, stride=2, padding=1)
        self.down2_res = ResBlock(c1, c1, td)
        self.down2_attn = att("down2", "down", c1)
        self.downsample2 = nn.Conv2d(c1, c1, 3, stride=2, padding=1)
        self.mid_res = ResBlock(c1, c1, td)
        self.mid_attn = att("mid", "mid", c1)
        self.up1_res = ResBlock(c1 + c1, c1, td)
        self.up1_attn = att("up1", "up", c1)
        self.up2_res = ResBlock(c1 + c0, c0, td)
        self.up2_attn = att("up2", "up", c0)
        self.head_norm = nn.GroupNorm(NORM_GROUPS, c0)
        self.head = nn.Conv2d(c0, config.data_channels, 3, padding=1)

        self._init_parameters(torch.Generator().manual_seed(init_seed))

    def _init_parameters(self, gen: torch.Generator) -> None:
        for name, p in self.named_parameters():
            if name.endswith("pos_embed"):
                with torch.no_grad():
                    p.copy_(torch.randn(p.shape, generator=gen) * 0.02)
            elif p.dim() >= 2:
                fan_in = p.shape[1] * (p[0, 0].numel() if p.dim() > 2 else 1)
                bound = 1.0 / math.sqrt(fan_in)
                with torch.no_grad():
                    p.copy_(torch.rand(p.shape, generator=gen) * 2 * bound - bound)
            elif name.endswith("bias"):
                nn.init.zeros_(p)
            # GroupNorm affine keeps its ones/zeros default.

    def temporal_layers(self) -> list[TemporalSelfAttention]:
        return [m for m in self.modules() if isinstance(m, TemporalSelfAttention)]

    def layer_registry(self) -> dict[str, str]:
        """Ordered layer id -> block group for every temporal attention layer."""
        return {layer.layer_id: layer.group for layer in self.temporal_layers()}

    def forward(
        self,
        z_t: torch.Tensor,
        t: int | torch.Tensor,
        cond: torch.Tensor,
        plan: AttentionPlan | None = None,
    ) -> tuple[torch.Tensor, dict[str, torch.Tensor] | None]:
        """Predict v for z_t [B, N, C, H, W] given a conditioning frame [B, C, H, W].

        Returns (v_hat, maps) where maps holds every layer's attention logits
        when the plan extracts and is None otherwise.
        """
        plan = plan or COMPUTE_PLAN
        b, n, c, height, width = z_t.shape
        cfg = self.config
        if n != cfg.frames:
            raise ValueError(f"model built for {cfg.frames} frames, got {n}")
        if c != cfg.data_channels or cond.shape != (b, c, height, width):
            raise ValueError(
                f"conditioning shape {tuple(cond.shape)} does not match latent "
                f"{tuple(z_t.shape)}"
            )
        if height % 4 or width % 4:
            raise ValueError("spatial size must be divisible by 4")

        dtype = self.head.weight.dtype
        if not isinstance(t, torch.Tensor):
            t = torch.full((b,), int(t), dtype=torch.long)
        temb = self.time_mlp(sinusoidal_embedding(t, cfg.time_dim, dtype))
        temb = temb.repeat_interleave(n, dim=0)

        x = torch.cat([z_t, cond.unsqueeze(1).expand(b, n, c, height, width)], dim=2)
        h = self.stem(x.reshape(b * n, 2 * c, height, width))

        maps: dict[str, torch.Tensor] = {}

        def run_attn(layer: TemporalSelfAttention, h: torch.Tensor) -> torch.Tensor:
            h, extracted = layer(h, b, plan)
            if extracted is not None:
                maps[layer.layer_id] = extracted
            return h

        h = run_attn(self.down1_attn, self.down1_res(h, temb))
        skip1 = h
        h = self.downsample1(h)
        h = run_attn(self.down2_attn, self.down2_res(h, temb))
        skip2 = h
        h = self.downsample2(h)
        h = run_attn(self.mid_attn, self.mid_res(h, temb))
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = run_attn(self.up1_attn, self.up1_res(torch.cat([h, skip2], dim=1), temb))
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = run_attn(self.up2_attn, self.up2_res(torch.cat([h, skip1], dim=1), temb))
        v_hat = self.head(F.silu(self.head_norm(h))).reshape(b, n, c, height, width)
        if not torch.isfinite(v_hat.sum()):
            raise NumericError("non-finite activations in output head")
        return v_hat, (maps if plan.mode == "extract" else None)


# ---------------------------------------------------------------------------
# Trainability policies


def set_trainable(model: VideoDenoiser, policy: str) -> None:
    """Mark parameters trainable per policy; everything else is frozen."""
    if policy not in TRAIN_POLICIES:
        raise ConfigurationError(f"unknown trainable policy {policy!r}; available: {TRAIN_POLICIES}")
    if policy == "all":
        for p in model.parameters():
            p.requires_grad_(True)
    else:
        names = ("to_v", "to_out") if policy == "temporal_vo_only" else (
            "to_q", "to_k", "to_v", "to_out"
        )
        for p in model.parameters():
            p.requires_grad_(False)
        for layer in model.temporal_layers():
            for name in names:
                getattr(layer, name).weight.requires_grad_(True)
    model.trainable_policy = policy


def trainable_parameter_names(model: VideoDenoiser) -> list[str]:
    return [name for name, p in model.named_parameters() if p.requires_grad]


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(
    model: VideoDenoiser, path: str | Path, step: int = 0, extra: dict | None = None
) -> None:
    names, arrays, shapes = [], [], []
    for name, p in model.named_parameters():
        names.append(name)
        arrays.append(p.detach().to(torch.float32).numpy())
        shapes.append(list(p.shape))
    manifest = {
        "kind": "checkpoint",
        "version": 1,
        "arch": asdict(model.config),
        "arch_hash": model.config.arch_hash,
        "params": [{"name": n, "shape": s} for n, s in zip(names, shapes)],
        "policy": getattr(model, "trainable_policy", "all"),
        "step": step,
        "extra": extra or {},
    }
    write_container(path, manifest, arrays)


def load_checkpoint(path: str | Path) -> tuple[VideoDenoiser, dict]:
    manifest, data = read_container(path)
    if manifest.get("kind") != "checkpoint":
        raise DataFormatError(f"{path}: container is not a checkpoint")
    config = ModelConfig(**manifest["arch"])
    if config.arch_hash != manifest["arch_hash"]:
        raise DataFormatError(
            f"{path}: architecture hash mismatch "
            f"({manifest['arch_hash']} stored, {config.arch_hash} derived)"
        )
    entries = manifest["params"]
    arrays = split_arrays(data, [tuple(e["shape"]) for e in entries], path)
    model = VideoDenoiser(config)
    stored = {e["name"]: arr for e, arr in zip(entries, arrays)}
    current = dict(model.named_parameters())
    if set(stored) != set(current):
        raise DataFormatError(f"{path}: parameter names do not match the architecture")
    with torch.no_grad():
        for name, p in current.items():
            arr = stored[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise DataFormatError(f"{path}: shape mismatch for {name}")
            p.copy_(torch.from_numpy(np.ascontiguousarray(arr)))
    set_trainable(model, manifest.get("policy", "all"))
    return model, manifest


def parameter_hash(model: VideoDenoiser) -> str:
    digest = hashlib.sha256()
    for name, p in model.named_parameters():
        digest.update(name.encode())
        digest.update(p.detach().to(torch.float32).numpy().tobytes())
    return digest.hexdigest()
