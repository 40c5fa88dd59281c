"""End-to-end experiment: data, two training stages, four samplers, one table.

Runs the whole pipeline on held-out keyframe pairs and reports the full
method next to the two-ended forward baseline and both ablations (no rotated
maps / no fine-tuning), one row per method.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .config import RunConfig
from .data import extract_keyframes, generate_dataset, save_dataset, save_pairs
from .evaluation import EvalSummary, evaluate_run
from .model import ModelConfig, VideoDenoiser, save_checkpoint
from .sampling import SamplerConfig, sample
from .schedule import NoiseSchedule, build_schedule
from .training import TrainConfig, finetune_backward, pretrain_forward

EXPERIMENT_MODES = ("dual", "trf_baseline", "wo_ra", "wo_ft")

METRIC_COLUMNS = (
    "endpoint_mse_first",
    "endpoint_mse_last",
    "psnr_vs_gt",
    "monotone_fraction",
    "mean_reversals",
)


def _train_config(cfg: RunConfig, iterations: int, seed: int, policy: str) -> TrainConfig:
    lr = cfg.pretrain_learning_rate if policy == "all" else cfg.learning_rate
    return TrainConfig(
        learning_rate=lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
        batch_size=cfg.batch_size,
        iterations=iterations,
        seed=seed,
        v_target_mode=cfg.v_target_mode,
        policy=policy,
    )


def model_config_from_run(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(
        frames=cfg.frames,
        data_channels=3,
        base_channels=cfg.base_channels,
        head_dim=cfg.head_dim,
        time_dim=cfg.time_dim,
    )


def write_loss_log(log: list[tuple[int, float]], path: Path) -> None:
    lines = ["step\tloss"] + [f"{step}\t{loss:.8f}" for step, loss in log]
    path.write_text("\n".join(lines) + "\n")


def _step_reporter(say, label: str, every: int = 100):
    if say is None:
        return None

    def report(step: int, loss: float) -> None:
        if step % every == 0:
            say(f"[{label}] step {step}: loss {loss:.6f}")

    return report


def train_models(
    cfg: RunConfig,
    sched: NoiseSchedule,
    train_clips,
    out_dir: Path | None = None,
    progress=None,
) -> dict[str, VideoDenoiser]:
    """Pretrain the forward model and produce both backward variants.

    `progress`, when given, receives one-line status messages.
    """
    mc = model_config_from_run(cfg)
    fwd, pre_log = pretrain_forward(
        train_clips, _train_config(cfg, cfg.pretrain_iterations, cfg.seed, "all"), sched, mc,
        progress=_step_reporter(progress, "pretrain"),
    )
    bwd, ft_log = finetune_backward(
        fwd, train_clips,
        _train_config(cfg, cfg.finetune_iterations, cfg.seed + 1, "temporal_vo_only"),
        sched, mode="full", progress=_step_reporter(progress, "finetune"),
    )
    bwd_wo_ra, ra_log = finetune_backward(
        fwd, train_clips,
        _train_config(cfg, cfg.finetune_iterations, cfg.seed + 2, "temporal_qkvo_only"),
        sched, mode="wo_ra", progress=_step_reporter(progress, "finetune-wo-ra"),
    )
    if out_dir is not None:
        save_checkpoint(fwd, out_dir / "checkpoint_forward.bin", step=cfg.pretrain_iterations)
        save_checkpoint(bwd, out_dir / "checkpoint_backward.bin", step=cfg.finetune_iterations)
        save_checkpoint(
            bwd_wo_ra, out_dir / "checkpoint_backward_wo_ra.bin", step=cfg.finetune_iterations
        )
        write_loss_log(pre_log, out_dir / "loss_pretrain.tsv")
        write_loss_log(ft_log, out_dir / "loss_finetune.tsv")
        write_loss_log(ra_log, out_dir / "loss_finetune_wo_ra.tsv")
    return {"forward": fwd, "backward": bwd, "backward_wo_ra": bwd_wo_ra}


def sample_mode(
    mode: str,
    models: dict[str, VideoDenoiser],
    firsts: torch.Tensor,
    lasts: torch.Tensor,
    cfg: RunConfig,
    sched: NoiseSchedule,
    seed: int | None = None,
):
    scfg = SamplerConfig(
        steps=cfg.schedule_steps,
        recurrence=cfg.recurrence,
        fusion=cfg.fusion,
        seed=cfg.sample_seed if seed is None else seed,
        mode=mode,
    )
    bwd = models["backward_wo_ra"] if mode == "wo_ra" else models["backward"]
    return sample(mode, firsts, lasts, models["forward"], bwd, scfg, sched)


def run_experiment(
    cfg: RunConfig, out_dir: str | Path, progress=None
) -> dict[str, EvalSummary]:
    """Execute the full pipeline and return one summary per method."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = progress or (lambda msg: None)

    sched = build_schedule(cfg.schedule_steps, cfg.schedule_family)
    say(f"generating {cfg.train_clips} training / {cfg.test_clips} test clips")
    train_clips = generate_dataset(
        cfg.generator, cfg.train_clips, cfg.frames, cfg.size, cfg.size, cfg.seed
    )
    test_clips = generate_dataset(
        cfg.generator, cfg.test_clips, cfg.frames, cfg.size, cfg.size, cfg.seed + cfg.train_clips
    )
    save_dataset(train_clips, out / "dataset.bin")
    save_dataset(test_clips, out / "test_dataset.bin")
    pairs = [extract_keyframes(c) for c in test_clips]
    save_pairs(pairs, out / "pairs.bin")

    say("training forward model and both backward variants")
    models = train_models(cfg, sched, train_clips, out, progress=progress)

    firsts = torch.stack([p.first for p in pairs])
    lasts = torch.stack([p.last for p in pairs])
    results: dict[str, EvalSummary] = {}
    for mode in EXPERIMENT_MODES:
        say(f"sampling mode {mode}")
        clips = sample_mode(mode, models, firsts, lasts, cfg, sched)
        save_dataset(clips, out / f"samples_{mode}.bin")
        results[mode] = evaluate_run(
            clips, pairs, test_clips, cfg.background_level, cfg.min_displacement
        )

    write_report(results, out)
    cfg.save(out / "config.snapshot")
    return results


def format_table(results: dict[str, EvalSummary]) -> str:
    lines = ["method\t" + "\t".join(METRIC_COLUMNS)]
    for method, summary in results.items():
        cells = []
        for col in METRIC_COLUMNS:
            value = getattr(summary, col)
            cells.append("n/a" if value is None else f"{value:.6f}")
        lines.append(method + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def write_report(results: dict[str, EvalSummary], out: Path) -> None:
    (out / "report.txt").write_text(format_table(results))
    payload = {
        method: {col: getattr(summary, col) for col in METRIC_COLUMNS}
        for method, summary in results.items()
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
