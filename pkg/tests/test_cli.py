import json
from pathlib import Path

import pytest

from tweendiff.cli import main
from tweendiff.data import load_dataset, save_pairs, extract_keyframes, write_frame

MICRO_CFG = """\
seed = 0
generator = accel_ball
train_clips = 3
test_clips = 2
frames = 4
size = 8
schedule_steps = 4
base_channels = 8
head_dim = 8
time_dim = 16
batch_size = 2
pretrain_iterations = 4
finetune_iterations = 3
recurrence = 2
sample_seed = 7
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(MICRO_CFG)
    return str(path)


def run(*argv):
    return main(list(argv))


def test_gen_data_writes_fixed_filenames(tmp_path):
    out = tmp_path / "d"
    code = run(
        "gen-data", "--generator", "accel_ball", "--count", "4",
        "--frames", "4", "--size", "8", "--seed", "1", "--out", str(out),
    )
    assert code == 0
    assert (out / "dataset.bin").exists()
    assert (out / "config.snapshot").exists()
    assert len(load_dataset(out / "dataset.bin")) == 4


def test_gen_data_is_bit_reproducible(tmp_path):
    args = ["gen-data", "--count", "3", "--frames", "4", "--size", "8", "--seed", "2"]
    run(*args, "--out", str(tmp_path / "a"))
    run(*args, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a/dataset.bin").read_bytes() == (tmp_path / "b/dataset.bin").read_bytes()


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        run("gen-data", "--frames", "4", "--out", "x", "--wat", "1")
    assert exc.value.code == 2


def test_bad_config_exits_3(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("not_a_knob = 1\n")
    (tmp_path / "d").mkdir()
    code = run(
        "pretrain", "--data", str(tmp_path / "d"), "--config", str(bad),
        "--out-checkpoint", str(tmp_path / "ck.bin"),
    )
    assert code == 3


def test_missing_file_exits_1(tmp_path):
    code = run(
        "evaluate", "--generated", str(tmp_path / "nope.bin"),
        "--pairs", str(tmp_path / "nope2.bin"), "--out", str(tmp_path / "r"),
    )
    assert code == 1


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data -> pretrain -> finetune-backward (both modes) at micro scale."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "run.cfg"
    cfg.write_text(MICRO_CFG)
    assert run(
        "gen-data", "--count", "3", "--frames", "4", "--size", "8",
        "--seed", "0", "--out", str(root / "data"),
    ) == 0
    data = str(root / "data" / "dataset.bin")
    assert run(
        "pretrain", "--data", data, "--config", str(cfg),
        "--out-checkpoint", str(root / "fwd" / "checkpoint.bin"),
    ) == 0
    assert run(
        "finetune-backward", "--forward-checkpoint", str(root / "fwd" / "checkpoint.bin"),
        "--data", data, "--config", str(cfg), "--mode", "full",
        "--out-checkpoint", str(root / "bwd" / "checkpoint.bin"),
    ) == 0
    assert run(
        "finetune-backward", "--forward-checkpoint", str(root / "fwd" / "checkpoint.bin"),
        "--data", data, "--config", str(cfg), "--mode", "wo_ra",
        "--out-checkpoint", str(root / "bwd_wo_ra" / "checkpoint.bin"),
    ) == 0
    return root


def test_pipeline_artifacts_exist(pipeline):
    assert (pipeline / "fwd" / "checkpoint.bin").exists()
    assert (pipeline / "fwd" / "loss_log.tsv").exists()
    assert (pipeline / "fwd" / "config.snapshot").exists()
    log = (pipeline / "fwd" / "loss_log.tsv").read_text().splitlines()
    assert log[0] == "step\tloss"
    assert len(log) == 5  # header + 4 iterations


def test_pretrain_is_bit_reproducible(pipeline, tmp_path):
    cfg = pipeline / "run.cfg"
    data = str(pipeline / "data" / "dataset.bin")
    assert run(
        "pretrain", "--data", data, "--config", str(cfg),
        "--out-checkpoint", str(tmp_path / "again" / "checkpoint.bin"),
    ) == 0
    assert (tmp_path / "again" / "checkpoint.bin").read_bytes() == (
        pipeline / "fwd" / "checkpoint.bin"
    ).read_bytes()


def test_sample_and_evaluate_round_trip(pipeline, tmp_path):
    clips = load_dataset(pipeline / "data" / "dataset.bin")
    first = tmp_path / "first.npy"
    last = tmp_path / "last.npy"
    write_frame(clips[0].frames[0], first)
    write_frame(clips[0].frames[-1], last)

    out_a, out_b = tmp_path / "sample_a", tmp_path / "sample_b"
    for out in (out_a, out_b):
        assert run(
            "sample", "--mode", "dual",
            "--fwd-checkpoint", str(pipeline / "fwd" / "checkpoint.bin"),
            "--bwd-checkpoint", str(pipeline / "bwd" / "checkpoint.bin"),
            "--first-frame", str(first), "--last-frame", str(last),
            "--steps", "4", "--recurrence", "2", "--seed", "3",
            "--out", str(out), "--dump-frames",
        ) == 0
    assert (out_a / "samples.bin").read_bytes() == (out_b / "samples.bin").read_bytes()
    assert (out_a / "frames" / "frame_000.ppm").exists()

    pairs_path = tmp_path / "pairs.bin"
    save_pairs([extract_keyframes(clips[0])], pairs_path)
    report_dir = tmp_path / "report"
    assert run(
        "evaluate", "--generated", str(out_a / "samples.bin"),
        "--pairs", str(pairs_path), "--out", str(report_dir),
    ) == 0
    report = (report_dir / "report.txt").read_text().splitlines()
    assert report[0].startswith("clip\tendpoint_mse_first")
    assert len(report) == 2
    assert json.loads((report_dir / "report.json").read_text())


def test_sample_modes_needing_bwd_require_flag(pipeline, tmp_path):
    clips = load_dataset(pipeline / "data" / "dataset.bin")
    first = tmp_path / "first.npy"
    write_frame(clips[0].frames[0], first)
    code = run(
        "sample", "--mode", "dual",
        "--fwd-checkpoint", str(pipeline / "fwd" / "checkpoint.bin"),
        "--first-frame", str(first), "--last-frame", str(first),
        "--steps", "4", "--out", str(tmp_path / "x"),
    )
    assert code == 3


def test_run_experiment_table(tmp_path, cfg_file):
    out = tmp_path / "exp"
    assert run("run-experiment", "--config", cfg_file, "--out", str(out)) == 0
    table = (out / "report.txt").read_text().splitlines()
    assert table[0].split("\t") == [
        "method", "endpoint_mse_first", "endpoint_mse_last",
        "psnr_vs_gt", "monotone_fraction", "mean_reversals",
    ]
    methods = [line.split("\t")[0] for line in table[1:]]
    assert methods == ["dual", "trf_baseline", "wo_ra", "wo_ft"]
    for name in (
        "dataset.bin", "test_dataset.bin", "pairs.bin", "checkpoint_forward.bin",
        "checkpoint_backward.bin", "checkpoint_backward_wo_ra.bin",
        "samples_dual.bin", "report.json", "config.snapshot",
    ):
        assert (out / name).exists(), name


def test_run_experiment_is_reproducible(tmp_path, cfg_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("run-experiment", "--config", cfg_file, "--out", str(a)) == 0
    assert run("run-experiment", "--config", cfg_file, "--out", str(b)) == 0
    assert (a / "report.txt").read_bytes() == (b / "report.txt").read_bytes()
    assert (a / "samples_dual.bin").read_bytes() == (b / "samples_dual.bin").read_bytes()


def test_numeric_failure_exits_4(pipeline, tmp_path, monkeypatch):
    import torch
    from tweendiff.model import load_checkpoint, save_checkpoint

    model, _ = load_checkpoint(pipeline / "fwd" / "checkpoint.bin")
    with torch.no_grad():
        model.stem.weight.mul_(float("nan"))
    bad = tmp_path / "bad.bin"
    save_checkpoint(model, bad)
    clips = load_dataset(pipeline / "data" / "dataset.bin")
    first = tmp_path / "first.npy"
    write_frame(clips[0].frames[0], first)
    code = run(
        "sample", "--mode", "forward", "--fwd-checkpoint", str(bad),
        "--first-frame", str(first), "--steps", "4", "--out", str(tmp_path / "o"),
    )
    assert code == 4
