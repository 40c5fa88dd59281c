"""Time-reversal primitives for latents and temporal attention maps.

A temporal attention map stores one N x N matrix of inter-frame logits per
spatial site. Rotating such a map by 180 degrees (reversing both frame axes)
turns a forward motion-time association into the association of the
time-reversed video: entry (j, k) moves to (N-1-j, N-1-k).
"""

from __future__ import annotations

import torch


def flip_time(x: torch.Tensor, axis: int) -> torch.Tensor:
    """Reverse frame order along `axis`, leaving all other axes untouched."""
    if not -x.dim() <= axis < x.dim():
        raise ValueError(f"axis {axis} out of range for tensor with {x.dim()} dims")
    return torch.flip(x, dims=(axis,))


def rotate_map_180(attn_map: torch.Tensor) -> torch.Tensor:
    """Rotate inter-frame attention logits by 180 degrees.

    Accepts any tensor whose trailing two dimensions are the (query frame,
    key frame) axes; both must have the same length.
    """
    if attn_map.dim() < 2 or attn_map.shape[-1] != attn_map.shape[-2]:
        raise ValueError(
            f"expected square trailing frame axes, got shape {tuple(attn_map.shape)}"
        )
    return torch.flip(attn_map, dims=(-2, -1))


def rotate_set(maps: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Rotate every map in a layer-keyed collection, preserving keys and order."""
    return {layer: rotate_map_180(m) for layer, m in maps.items()}
