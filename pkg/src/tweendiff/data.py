"""Synthetic time-asymmetric video clips, keyframe pairs, and dataset files.

Every generator draws a single bright object on a dark background and moves
it under a motion law whose arrow of time is identifiable from the footage
alone (speed ramps, monotone brightness or size drift). Clips are pure
functions of (generator, seed, N, H, W), so datasets are reproducible from
their manifest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .container import read_container, split_arrays, write_container
from .errors import ConfigurationError, DataFormatError

BACKGROUND = 0.05
CHANNELS = 3


@dataclass
class VideoClip:
    """An N-frame video, values in [0, 1], shape [N, C, H, W]."""

    frames: torch.Tensor
    generator: str = "unknown"
    seed: int = 0
    motion: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.frames.dim() != 4:
            raise ValueError(f"frames must be [N, C, H, W], got {tuple(self.frames.shape)}")
        if not torch.isfinite(self.frames).all():
            raise ValueError("frames contain non-finite values")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise ValueError("frame values must lie in [0, 1]")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def clip_id(self) -> str:
        return f"{self.generator}:{self.seed}"


@dataclass
class KeyframePair:
    """The two endpoint frames of a clip plus the number of in-between steps."""

    first: torch.Tensor  # [C, H, W]
    last: torch.Tensor  # [C, H, W]
    gap: int
    source_clip_id: str | None = None

    def __post_init__(self) -> None:
        if self.first.shape != self.last.shape:
            raise ValueError(
                f"keyframes differ in shape: {tuple(self.first.shape)} vs {tuple(self.last.shape)}"
            )


def extract_keyframes(clip: VideoClip) -> KeyframePair:
    """First frame, last frame, and gap = N - 2 in-between frames."""
    if clip.frame_count < 2:
        raise ValueError("need at least 2 frames to extract a keyframe pair")
    return KeyframePair(
        first=clip.frames[0].clone(),
        last=clip.frames[-1].clone(),
        gap=clip.frame_count - 2,
        source_clip_id=clip.clip_id,
    )


# ---------------------------------------------------------------------------
# Generators


def _paint_disc(frame: np.ndarray, cx: float, cy: float, radius: float, color: np.ndarray) -> None:
    h, w = frame.shape[1:]
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    frame += alpha[None] * (color[:, None, None] - frame)


def _paint_square(frame: np.ndarray, cx: float, cy: float, half: float, color: np.ndarray) -> None:
    h, w = frame.shape[1:]
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    dist = np.maximum(np.abs(xs - cx), np.abs(ys - cy))
    alpha = np.clip(half + 0.5 - dist, 0.0, 1.0)
    frame += alpha[None] * (color[:, None, None] - frame)


def _fit_path(points: np.ndarray, margin: float, h: int, w: int) -> np.ndarray:
    """Shift a trajectory so the whole object stays inside the frame."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    span = np.array([w - 1, h - 1], dtype=np.float64)
    if (hi - lo > span - 2 * margin).any():
        raise ValueError("motion path does not fit inside the frame")
    shift = np.maximum(margin - lo, 0.0) + np.minimum(span - margin - hi, 0.0)
    return points + shift


def _accel_ball(rng: np.random.Generator, n: int, h: int, w: int) -> tuple[np.ndarray, dict]:
    """Disc at rest, constant acceleration, brightness rising linearly."""
    scale = min(h, w)
    radius = max(1.5, scale * rng.uniform(0.09, 0.13))
    margin = radius + 1.5
    usable = (scale - 1.0) - 2.0 * margin
    total = rng.uniform(0.55, 0.8) * usable
    steps = max(n - 1, 1)
    accel = 2.0 * total / steps**2
    theta = rng.uniform(0.0, 2.0 * np.pi)
    direction = np.array([np.cos(theta), np.sin(theta)])
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    start = center - direction * total / 2.0 + rng.uniform(-1.0, 1.0, size=2)
    offsets = 0.5 * accel * np.arange(n, dtype=np.float64) ** 2
    points = _fit_path(start + offsets[:, None] * direction, margin, h, w)

    bright0 = rng.uniform(0.60, 0.70)
    bright1 = rng.uniform(0.90, 0.97)
    tint = rng.uniform(0.85, 1.0, size=CHANNELS)
    frames = np.full((n, CHANNELS, h, w), BACKGROUND, dtype=np.float64)
    for i in range(n):
        level = bright0 + (bright1 - bright0) * (i / steps)
        _paint_disc(frames[i], points[i, 0], points[i, 1], radius, level * tint)
    motion = {
        "radius": radius,
        "accel": accel,
        "theta": theta,
        "brightness": [bright0, bright1],
        "centroids": points.tolist(),
    }
    return frames, motion


def _shrink_slide(rng: np.random.Generator, n: int, h: int, w: int) -> tuple[np.ndarray, dict]:
    """Square sliding while its size and step length both decay 3% per frame.

    The matched decay keeps the step-length sequence non-palindromic, so the
    clip's direction of time stays readable from the trajectory alone.
    """
    decay = 0.97
    scale = min(h, w)
    half0 = max(1.5, scale * rng.uniform(0.11, 0.15))
    margin = half0 + 1.5
    usable = (scale - 1.0) - 2.0 * margin
    total = rng.uniform(0.5, 0.75) * usable
    steps = max(n - 1, 1)
    # Step lengths v0 * decay^i must sum to the total path length.
    v0 = total * (1.0 - decay) / (1.0 - decay**steps)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    direction = np.array([np.cos(theta), np.sin(theta)])
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    start = center - direction * total / 2.0 + rng.uniform(-1.0, 1.0, size=2)
    offsets = np.concatenate([[0.0], np.cumsum(v0 * decay ** np.arange(steps))])[:n]
    points = _fit_path(start + offsets[:, None] * direction, margin, h, w)

    level = rng.uniform(0.7, 0.9)
    tint = rng.uniform(0.85, 1.0, size=CHANNELS)
    frames = np.full((n, CHANNELS, h, w), BACKGROUND, dtype=np.float64)
    for i in range(n):
        _paint_square(frames[i], points[i, 0], points[i, 1], half0 * decay**i, level * tint)
    motion = {
        "half0": half0,
        "v0": v0,
        "theta": theta,
        "decay": decay,
        "centroids": points.tolist(),
    }
    return frames, motion


GENERATORS = {
    "accel_ball": _accel_ball,
    "shrink_slide": _shrink_slide,
}


def generate_clip(generator: str, seed: int, n: int, h: int, w: int) -> VideoClip:
    """Render one clip; deterministic in all arguments."""
    if generator not in GENERATORS:
        raise ConfigurationError(
            f"unknown generator {generator!r}; available: {', '.join(sorted(GENERATORS))}"
        )
    if n < 2:
        raise ValueError(f"clips need at least 2 frames, got {n}")
    rng = np.random.default_rng(seed)
    frames, motion = GENERATORS[generator](rng, n, h, w)
    return VideoClip(
        frames=torch.from_numpy(np.clip(frames, 0.0, 1.0).astype(np.float32)),
        generator=generator,
        seed=seed,
        motion=motion,
    )


def generate_dataset(generator: str, count: int, n: int, h: int, w: int, seed: int) -> list[VideoClip]:
    """`count` clips with consecutive seeds starting at `seed`."""
    return [generate_clip(generator, seed + i, n, h, w) for i in range(count)]


# ---------------------------------------------------------------------------
# Dataset files


def save_dataset(clips: list[VideoClip], path: str | Path) -> None:
    manifest = {
        "kind": "dataset",
        "version": 1,
        "clips": [
            {
                "id": c.clip_id,
                "generator": c.generator,
                "seed": c.seed,
                "shape": list(c.frames.shape),
                "motion": c.motion,
            }
            for c in clips
        ],
    }
    write_container(path, manifest, [c.frames.numpy() for c in clips])


def load_dataset(path: str | Path) -> list[VideoClip]:
    manifest, data = read_container(path)
    if manifest.get("kind") != "dataset":
        raise DataFormatError(f"{path}: container is not a dataset")
    entries = manifest["clips"]
    arrays = split_arrays(data, [tuple(e["shape"]) for e in entries], path)
    return [
        VideoClip(
            frames=torch.from_numpy(arr),
            generator=e["generator"],
            seed=e["seed"],
            motion=e.get("motion", {}),
        )
        for e, arr in zip(entries, arrays)
    ]


def save_pairs(pairs: list[KeyframePair], path: str | Path) -> None:
    """Keyframe pairs stored as 2-frame clips with gap/source in the manifest."""
    manifest = {
        "kind": "dataset",
        "version": 1,
        "clips": [
            {
                "id": p.source_clip_id or f"pair:{i}",
                "generator": "keyframe_pair",
                "seed": i,
                "shape": [2, *p.first.shape],
                "motion": {"gap": p.gap, "source_clip_id": p.source_clip_id},
            }
            for i, p in enumerate(pairs)
        ],
    }
    write_container(path, manifest, [torch.stack([p.first, p.last]).numpy() for p in pairs])


def load_pairs(path: str | Path) -> list[KeyframePair]:
    clips = load_dataset(path)
    pairs = []
    for clip in clips:
        if clip.frame_count != 2:
            raise DataFormatError(f"{path}: pair entries must hold exactly 2 frames")
        pairs.append(
            KeyframePair(
                first=clip.frames[0],
                last=clip.frames[1],
                gap=int(clip.motion.get("gap", 0)),
                source_clip_id=clip.motion.get("source_clip_id"),
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# Single-frame image I/O (binary PPM, plus .npy passthrough)


def write_frame(frame: torch.Tensor, path: str | Path) -> None:
    """Write one [C, H, W] frame; .ppm gets 8-bit P6, .npy keeps float32."""
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, frame.numpy().astype(np.float32))
        return
    if path.suffix != ".ppm":
        raise ConfigurationError(f"unsupported frame format {path.suffix!r} (use .ppm or .npy)")
    c, h, w = frame.shape
    if c != 3:
        raise ValueError(f"PPM output needs 3 channels, got {c}")
    pixels = (frame.numpy().clip(0.0, 1.0) * 255.0).round().astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def read_frame(path: str | Path) -> torch.Tensor:
    path = Path(path)
    if path.suffix == ".npy":
        return torch.from_numpy(np.load(path).astype(np.float32))
    raw = path.read_bytes()
    # Exactly one whitespace byte terminates the maxval token; pixel bytes may
    # themselves be whitespace-valued, so no tokenizing past the header.
    header = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", raw)
    if header is None:
        raise DataFormatError(f"{path}: not an 8-bit binary PPM")
    w, h = int(header.group(1)), int(header.group(2))
    body = raw[header.end() :]
    if len(body) < w * h * 3:
        raise DataFormatError(f"{path}: truncated PPM pixel data")
    pixels = np.frombuffer(body, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)
    return torch.from_numpy(pixels.transpose(2, 0, 1).astype(np.float32) / 255.0)
