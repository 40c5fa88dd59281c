import numpy as np
import pytest
import torch

from conftest import SMALL
from tweendiff.data import generate_dataset
from tweendiff.errors import ConfigurationError, DivergenceError
from tweendiff.model import parameter_hash
from tweendiff.schedule import v_target
from tweendiff.temporal import flip_time
from tweendiff.training import TrainConfig, finetune_backward, pretrain_forward


def smoothed(losses, k):
    return float(np.mean(losses[:k])), float(np.mean(losses[-k:]))


@pytest.fixture(scope="module")
def pretrained(tiny_clips, sched10):
    cfg = TrainConfig(iterations=60, batch_size=2, seed=0, learning_rate=3e-3)
    model, log = pretrain_forward(tiny_clips, cfg, sched10, SMALL)
    return model, log


def test_overfit_single_clip_reduces_loss(tiny_clips, sched10):
    cfg = TrainConfig(iterations=200, batch_size=1, seed=0, learning_rate=3e-3)
    _, log = pretrain_forward(tiny_clips[:1], cfg, sched10, SMALL)
    early, late = smoothed([l for _, l in log], 20)
    assert late < early


def test_pretrain_is_deterministic(tiny_clips, sched10):
    cfg = TrainConfig(iterations=15, batch_size=2, seed=5)
    a, _ = pretrain_forward(tiny_clips, cfg, sched10, SMALL)
    b, _ = pretrain_forward(tiny_clips, cfg, sched10, SMALL)
    assert parameter_hash(a) == parameter_hash(b)


def test_pretrain_requires_all_policy(tiny_clips, sched10):
    cfg = TrainConfig(iterations=1, policy="temporal_vo_only")
    with pytest.raises(ConfigurationError):
        pretrain_forward(tiny_clips, cfg, sched10, SMALL)


def test_pretrain_rejects_empty_dataset(sched10):
    with pytest.raises(ValueError):
        pretrain_forward([], TrainConfig(iterations=1), sched10, SMALL)


def test_finetune_full_touches_only_value_output(pretrained, tiny_clips, sched10):
    fwd, _ = pretrained
    cfg = TrainConfig(iterations=8, batch_size=2, seed=1, policy="temporal_vo_only")
    bwd, _ = finetune_backward(fwd, tiny_clips, cfg, sched10, mode="full")
    fwd_params = dict(fwd.named_parameters())
    for name, p in bwd.named_parameters():
        same = torch.equal(p.detach(), fwd_params[name].detach())
        if name.endswith(("to_v.weight", "to_out.weight")):
            assert not same, f"{name} should have trained"
        else:
            assert same, f"{name} should be frozen"


def test_finetune_wo_ra_trains_all_four_projections(pretrained, tiny_clips, sched10):
    fwd, _ = pretrained
    cfg = TrainConfig(iterations=8, batch_size=2, seed=1, policy="temporal_qkvo_only")
    bwd, _ = finetune_backward(fwd, tiny_clips, cfg, sched10, mode="wo_ra")
    fwd_params = dict(fwd.named_parameters())
    for name, p in bwd.named_parameters():
        same = torch.equal(p.detach(), fwd_params[name].detach())
        if name.endswith(("to_q.weight", "to_k.weight", "to_v.weight", "to_out.weight")):
            assert not same, f"{name} should have trained"
        else:
            assert same, f"{name} should be frozen"


def test_finetune_wo_ra_never_injects(pretrained, tiny_clips, sched10, monkeypatch):
    from tweendiff import training

    fwd, _ = pretrained
    seen = []
    original = type(fwd).forward

    def spy(self, z, t, cond, plan=None):
        seen.append(None if plan is None else plan.mode)
        return original(self, z, t, cond, plan)

    monkeypatch.setattr(type(fwd), "forward", spy)
    cfg = TrainConfig(iterations=3, batch_size=1, seed=1, policy="temporal_qkvo_only")
    training.finetune_backward(fwd, tiny_clips, cfg, sched10, mode="wo_ra")
    assert seen and all(mode is None for mode in seen)


def test_finetune_zero_iterations_returns_copy(pretrained, tiny_clips, sched10):
    fwd, _ = pretrained
    cfg = TrainConfig(iterations=0, seed=1, policy="temporal_vo_only")
    bwd, log = finetune_backward(fwd, tiny_clips, cfg, sched10, mode="full")
    assert log == []
    assert parameter_hash(bwd) == parameter_hash(fwd)


def test_forward_model_is_immutable_during_finetune(pretrained, tiny_clips, sched10):
    fwd, _ = pretrained
    before = parameter_hash(fwd)
    cfg = TrainConfig(iterations=6, batch_size=2, seed=2, policy="temporal_vo_only")
    finetune_backward(fwd, tiny_clips, cfg, sched10, mode="full")
    assert parameter_hash(fwd) == before


def test_policy_injection_mismatch_rejected(pretrained, tiny_clips, sched10):
    fwd, _ = pretrained
    with pytest.raises(ConfigurationError):
        finetune_backward(
            fwd, tiny_clips,
            TrainConfig(iterations=1, policy="temporal_vo_only"),
            sched10, mode="wo_ra",
        )
    with pytest.raises(ConfigurationError):
        finetune_backward(
            fwd, tiny_clips,
            TrainConfig(iterations=1, policy="temporal_qkvo_only"),
            sched10, mode="full",
        )


def test_finetune_is_deterministic(pretrained, tiny_clips, sched10):
    fwd, _ = pretrained
    cfg = TrainConfig(iterations=10, batch_size=2, seed=9, policy="temporal_vo_only")
    a, _ = finetune_backward(fwd, tiny_clips, cfg, sched10, mode="full")
    b, _ = finetune_backward(fwd, tiny_clips, cfg, sched10, mode="full")
    assert parameter_hash(a) == parameter_hash(b)


def test_flipped_target_with_zero_noise(sched10):
    # With eps forced to zero the target collapses to a pure data term.
    gen = torch.Generator().manual_seed(0)
    z = torch.randn(2, 4, 3, 8, 8, generator=gen)
    zero = torch.zeros_like(z)
    t = torch.tensor([3, 7])
    z_flip = flip_time(z, 1)
    clean = v_target(z_flip, zero, t, sched10, mode="clean")
    _, sigma = sched10.coef(t, z.dim())
    assert torch.equal(clean, -sigma * z_flip)
    literal = v_target(z_flip, zero, t, sched10, mode="literal")
    alpha, _ = sched10.coef(t, z.dim())
    z_t_flipped = alpha * z_flip  # corrupting the flipped clip with zero noise
    assert (literal - (-sigma * z_t_flipped)).abs().max() < 1e-7


def test_divergence_aborts(tiny_clips, sched10):
    cfg = TrainConfig(iterations=40, batch_size=2, seed=0, learning_rate=1e6)
    with pytest.raises(DivergenceError):
        pretrain_forward(tiny_clips, cfg, sched10, SMALL)


def test_invalid_train_config():
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)
