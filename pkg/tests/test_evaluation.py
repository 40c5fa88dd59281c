import numpy as np
import pytest
import torch

from tweendiff.data import VideoClip, extract_keyframes, generate_clip
from tweendiff.errors import EmptyFrameError
from tweendiff.evaluation import (
    EvalSummary,
    evaluate_run,
    frame_mse,
    pearson,
    psnr,
    track_centroids,
)
from tweendiff.temporal import flip_time


def disc_clip(centers, radius=3.0, size=32, level=0.8):
    """Hand-built clip: one disc per frame at the given (x, y) centers."""
    from tweendiff.data import _paint_disc

    frames = np.full((len(centers), 3, size, size), 0.05)
    for i, (cx, cy) in enumerate(centers):
        _paint_disc(frames[i], cx, cy, radius, np.full(3, level))
    return VideoClip(frames=torch.from_numpy(frames.astype(np.float32)), generator="manual")


def test_static_object_has_zero_displacements():
    clip = disc_clip([(16, 16)] * 5)
    report = track_centroids(clip)
    assert np.allclose(report.displacements, 0.0)
    assert report.reversal_count == 0
    assert report.monotone


def test_tracker_matches_generator_centroids():
    clip = generate_clip("accel_ball", 12, 16, 32, 32)
    report = track_centroids(clip)
    analytic = np.asarray(clip.motion["centroids"])
    assert np.abs(report.centroids - analytic).max() < 0.1


def test_ground_truth_clip_is_monotone():
    report = track_centroids(generate_clip("accel_ball", 4, 16, 32, 32))
    assert report.monotone and report.reversal_count == 0


def test_flip_equivariance_is_exact():
    clip = generate_clip("accel_ball", 9, 16, 32, 32)
    flipped = VideoClip(frames=flip_time(clip.frames, 0), generator="flip")
    fwd = track_centroids(clip)
    bwd = track_centroids(flipped)
    assert np.array_equal(bwd.displacements, -fwd.displacements[::-1])
    assert np.array_equal(bwd.speeds, fwd.speeds[::-1])


def test_back_and_forth_counts_reversals():
    xs = [8, 11, 14, 17, 14, 11, 14, 17]
    clip = disc_clip([(x, 16) for x in xs])
    report = track_centroids(clip)
    assert report.reversal_count == 2
    assert not report.monotone


def test_sub_threshold_jitter_is_not_a_reversal():
    xs = [8.0, 8.02, 8.0, 12.0, 16.0]
    clip = disc_clip([(x, 16) for x in xs])
    report = track_centroids(clip, min_displacement=0.1)
    assert report.reversal_count == 0


def test_empty_frame_raises():
    frames = torch.full((3, 3, 8, 8), 0.01)
    with pytest.raises(EmptyFrameError, match="frame 0"):
        track_centroids(VideoClip(frames=frames, generator="dark"))


def test_pearson_basics():
    x = np.arange(10.0)
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert pearson(x, np.ones(10)) == 0.0


def test_psnr_cap():
    assert psnr(0.0) == 99.0
    assert psnr(1e-12) == 99.0
    assert psnr(0.01) == pytest.approx(20.0)


def test_identity_run_scores_perfectly():
    clips = [generate_clip("accel_ball", s, 8, 32, 32) for s in range(3)]
    pairs = [extract_keyframes(c) for c in clips]
    summary = evaluate_run(clips, pairs, clips)
    assert summary.endpoint_mse_first == 0.0
    assert summary.endpoint_mse_last == 0.0
    assert summary.psnr_vs_gt == 99.0
    assert summary.monotone_fraction == 1.0
    assert summary.mean_reversals == 0.0


def test_single_reversal_summary():
    xs = [8, 12, 16, 20, 16, 12, 8, 8]
    clip = disc_clip([(x, 16) for x in xs])
    pair = extract_keyframes(clip)
    summary = evaluate_run([clip], [pair])
    assert summary.monotone_fraction == 0.0
    assert summary.mean_reversals == 1.0
    assert summary.psnr_vs_gt is None


def test_misaligned_lists_rejected():
    clip = generate_clip("accel_ball", 0, 8, 32, 32)
    with pytest.raises(ValueError):
        evaluate_run([clip], [])
    with pytest.raises(ValueError):
        evaluate_run([clip], [extract_keyframes(clip)], [])


def test_endpoint_metrics_swap_under_flip():
    gen_clip = generate_clip("accel_ball", 21, 8, 32, 32)
    other = generate_clip("accel_ball", 22, 8, 32, 32)
    pair = extract_keyframes(other)
    summary = evaluate_run([gen_clip], [pair])

    flipped_clip = VideoClip(frames=flip_time(gen_clip.frames, 0), generator="flip")
    swapped = extract_keyframes(
        VideoClip(frames=flip_time(other.frames, 0), generator="flip")
    )
    mirrored = evaluate_run([flipped_clip], [swapped])
    assert mirrored.endpoint_mse_first == summary.endpoint_mse_last
    assert mirrored.endpoint_mse_last == summary.endpoint_mse_first


def test_summaries_are_deterministic():
    clips = [generate_clip("shrink_slide", s, 8, 32, 32) for s in range(2)]
    pairs = [extract_keyframes(c) for c in clips]
    assert evaluate_run(clips, pairs, clips) == evaluate_run(clips, pairs, clips)


def test_frame_mse_shape_check():
    with pytest.raises(ValueError):
        frame_mse(torch.zeros(3, 4, 4), torch.zeros(3, 8, 8))
