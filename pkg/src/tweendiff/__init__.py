"""Keyframe in-betweening with a small bidirectional video diffusion model."""

from .data import (
    KeyframePair,
    VideoClip,
    extract_keyframes,
    generate_clip,
    generate_dataset,
    load_dataset,
    load_pairs,
    save_dataset,
    save_pairs,
)
from .evaluation import EvalSummary, TrajectoryReport, evaluate_run, pearson, track_centroids
from .model import (
    AttentionPlan,
    ModelConfig,
    VideoDenoiser,
    load_checkpoint,
    save_checkpoint,
    set_trainable,
)
from .sampling import (
    SamplerConfig,
    fuse,
    renoise,
    sample,
    sample_dual,
    sample_forward_only,
    sample_trf_baseline,
    sample_wo_ft,
    sample_wo_ra,
    update,
)
from .schedule import (
    NoiseSchedule,
    NoisyLatent,
    build_schedule,
    corrupt,
    decode_latent,
    encode_frames,
    invert_v,
    v_target,
)
from .temporal import flip_time, rotate_map_180, rotate_set
from .training import TrainConfig, finetune_backward, pretrain_forward

__version__ = "0.1.0"
