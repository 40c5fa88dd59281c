"""Command-line interface.

Commands: gen-data, pretrain, finetune-backward, sample, evaluate,
run-experiment. Every command snapshots its effective configuration next to
its outputs, and a rerun with the same arguments reproduces the artifacts
bit for bit.

Exit codes: 0 success, 2 usage, 3 configuration, 4 numeric failure, 1 other.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment
from .config import RunConfig, load_config
from .data import (
    generate_dataset,
    load_dataset,
    load_pairs,
    read_frame,
    save_dataset,
    write_frame,
)
from .errors import ConfigurationError, DataFormatError, NumericError, TweendiffError
from .evaluation import clip_metrics, evaluate_run
from .model import load_checkpoint, save_checkpoint
from .sampling import SamplerConfig, sample
from .schedule import build_schedule
from .training import POLICY_FOR_MODE, finetune_backward, pretrain_forward

CLI_SAMPLE_MODES = {
    "dual": "dual",
    "forward": "forward_only",
    "trf": "trf_baseline",
    "wo-ft": "wo_ft",
    "wo-ra": "wo_ra",
}


def _snapshot(path: Path, entries: dict) -> None:
    lines = [f"{key} = {value}" for key, value in sorted(entries.items())]
    path.write_text("\n".join(lines) + "\n")


def _progress_printer(label: str, every: int = 100):
    def emit(step: int, loss: float) -> None:
        if step % every == 0:
            print(f"[{label}] step {step}: loss {loss:.6f}", flush=True)

    return emit


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clips = generate_dataset(
        args.generator, args.count, args.frames, args.size, args.size, args.seed
    )
    save_dataset(clips, out / "dataset.bin")
    _snapshot(
        out / "config.snapshot",
        {
            "command": "gen-data",
            "generator": args.generator,
            "count": args.count,
            "frames": args.frames,
            "size": args.size,
            "seed": args.seed,
        },
    )
    print(f"wrote {len(clips)} clips to {out / 'dataset.bin'}")
    return 0


def _train_config_from_run(cfg: RunConfig, iterations: int, seed: int, policy: str):
    from .training import TrainConfig

    return TrainConfig(
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
        batch_size=cfg.batch_size,
        iterations=iterations,
        seed=seed,
        v_target_mode=cfg.v_target_mode,
        policy=policy,
    )


def cmd_pretrain(args) -> int:
    cfg = _load_run_config(args.config)
    clips = load_dataset(args.data)
    sched = build_schedule(cfg.schedule_steps, cfg.schedule_family)
    tc = _train_config_from_run(cfg, cfg.pretrain_iterations, cfg.seed, "all")
    model, log = pretrain_forward(
        clips, tc, sched, experiment.model_config_from_run(cfg),
        progress=_progress_printer("pretrain"),
    )
    out_path = Path(args.out_checkpoint)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_path, step=cfg.pretrain_iterations)
    experiment.write_loss_log(log, out_path.parent / "loss_log.tsv")
    cfg.save(out_path.parent / "config.snapshot")
    print(f"wrote checkpoint to {out_path}")
    return 0


def cmd_finetune_backward(args) -> int:
    cfg = _load_run_config(args.config)
    clips = load_dataset(args.data)
    sched = build_schedule(cfg.schedule_steps, cfg.schedule_family)
    fwd, _ = load_checkpoint(args.forward_checkpoint)
    seed = cfg.seed + (1 if args.mode == "full" else 2)
    tc = _train_config_from_run(
        cfg, cfg.finetune_iterations, seed, POLICY_FOR_MODE[args.mode]
    )
    model, log = finetune_backward(
        fwd, clips, tc, sched, mode=args.mode,
        progress=_progress_printer(f"finetune-{args.mode}"),
    )
    out_path = Path(args.out_checkpoint)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_path, step=cfg.finetune_iterations)
    experiment.write_loss_log(log, out_path.parent / "loss_log.tsv")
    cfg.save(out_path.parent / "config.snapshot")
    print(f"wrote checkpoint to {out_path}")
    return 0


def cmd_sample(args) -> int:
    mode = CLI_SAMPLE_MODES[args.mode]
    fwd, _ = load_checkpoint(args.fwd_checkpoint)
    bwd = None
    if mode in ("dual", "wo_ra"):
        if not args.bwd_checkpoint:
            raise ConfigurationError(f"mode {args.mode!r} needs --bwd-checkpoint")
        bwd, _ = load_checkpoint(args.bwd_checkpoint)
    first = read_frame(args.first_frame)
    last = read_frame(args.last_frame) if args.last_frame else None
    if mode != "forward_only" and last is None:
        raise ConfigurationError(f"mode {args.mode!r} needs --last-frame")

    sched = build_schedule(args.steps)
    scfg = SamplerConfig(
        steps=args.steps, recurrence=args.recurrence, seed=args.seed, mode=mode
    )
    clip = sample(mode, first, last, fwd, bwd, scfg, sched)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset([clip], out / "samples.bin")
    if args.dump_frames:
        frame_dir = out / "frames"
        frame_dir.mkdir(exist_ok=True)
        for i, frame in enumerate(clip.frames):
            write_frame(frame, frame_dir / f"frame_{i:03d}.ppm")
    _snapshot(
        out / "config.snapshot",
        {
            "command": "sample",
            "mode": args.mode,
            "steps": args.steps,
            "recurrence": args.recurrence,
            "seed": args.seed,
            "first_frame": args.first_frame,
            "last_frame": args.last_frame or "",
        },
    )
    print(f"wrote {out / 'samples.bin'}")
    return 0


def cmd_evaluate(args) -> int:
    generated = load_dataset(args.generated)
    pairs = load_pairs(args.pairs)
    gt = load_dataset(args.gt) if args.gt else None
    summary = evaluate_run(generated, pairs, gt)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        clip_metrics(g, p, gt[i] if gt else None)
        for i, (g, p) in enumerate(zip(generated, pairs))
    ]
    header = ["clip", "endpoint_mse_first", "endpoint_mse_last", "tracked",
              "reversal_count", "monotone"]
    if gt:
        header.append("psnr_vs_gt")
    lines = ["\t".join(header)]
    for i, row in enumerate(rows):
        cells = [str(i)]
        for key in header[1:]:
            value = row[key]
            cells.append(f"{value:.6f}" if isinstance(value, float) else
                         "n/a" if value is None else str(value))
        lines.append("\t".join(cells))
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    payload = {
        "endpoint_mse_first": summary.endpoint_mse_first,
        "endpoint_mse_last": summary.endpoint_mse_last,
        "psnr_vs_gt": summary.psnr_vs_gt,
        "monotone_fraction": summary.monotone_fraction,
        "mean_reversals": summary.mean_reversals,
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _snapshot(
        out / "config.snapshot",
        {
            "command": "evaluate",
            "generated": args.generated,
            "pairs": args.pairs,
            "gt": args.gt or "",
        },
    )
    print((out / "report.txt").read_text(), end="")
    return 0


def cmd_run_experiment(args) -> int:
    cfg = _load_run_config(args.config)
    results = experiment.run_experiment(
        cfg, args.out, progress=lambda msg: print(msg, flush=True)
    )
    print(experiment.format_table(results), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tweendiff",
        description="Keyframe in-betweening with a small bidirectional video diffusion model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic video dataset")
    p.add_argument("--generator", default="accel_ball")
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="train the forward image-to-video model")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-checkpoint", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune-backward", help="adapt a forward model to backward motion")
    p.add_argument("--forward-checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--mode", choices=("full", "wo_ra"), default="full")
    p.add_argument("--out-checkpoint", required=True)
    p.set_defaults(func=cmd_finetune_backward)

    p = sub.add_parser("sample", help="generate a clip from one or two keyframes")
    p.add_argument("--mode", choices=sorted(CLI_SAMPLE_MODES), default="dual")
    p.add_argument("--fwd-checkpoint", required=True)
    p.add_argument("--bwd-checkpoint", default=None)
    p.add_argument("--first-frame", required=True, help=".ppm or .npy image")
    p.add_argument("--last-frame", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--recurrence", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-frames", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="score generated clips against keyframe pairs")
    p.add_argument("--generated", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--gt", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="full pipeline plus comparison table")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except (DataFormatError, TweendiffError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
