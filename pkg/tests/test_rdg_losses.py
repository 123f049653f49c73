"""Adversarial objectives: closed-form oracles, clamping, gradients."""

import math

import pytest
import torch

from speech2image.rdg.losses import EPSILON, discriminator_loss, generator_loss
from speech2image.rdg.networks import (
    AblationFlags,
    ConditioningCode,
    ScaleDiscriminator,
)
from speech2image.rdg.relation import RelationClassifier, RelationSet

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)


def _half_disc(n):
    return lambda images, code: (
        torch.full((n,), 0.5, dtype=torch.float64),
        torch.full((n,), 0.5, dtype=torch.float64),
    )


def _code(n=3, dim=4, kl_zero=True):
    mu = torch.zeros(n, dim) if kl_zero else torch.randn(n, dim)
    log_var = torch.zeros(n, dim)
    return ConditioningCode(mu=mu, log_var=log_var, code=mu.clone())


def test_coin_flip_discriminator_gives_4_log2():
    n = 5
    images = torch.rand(n, 3, 8, 8)
    total, parts = discriminator_loss(_half_disc(n), images, images, _code(n))
    assert total.item() == pytest.approx(4 * LOG2, abs=1e-6)
    for term in (parts.real_uncond, parts.fake_uncond, parts.real_cond, parts.fake_cond):
        assert term == pytest.approx(LOG2, abs=1e-9)
    assert parts.saturated == 0


def test_generator_loss_full_oracle():
    # three coin-flip scales + uniform relation head + zero-KL code:
    # 3 * 2log2 + 4log3
    n = 4
    torch.manual_seed(0)
    relation = RelationClassifier(8, base_channels=4, relation_dim=8)
    with torch.no_grad():
        relation.head.weight.zero_()
        relation.head.bias.zero_()
    images = {s: torch.rand(n, 3, s, s) for s in (8, 16, 32)}
    rel_images = torch.rand(n, 3, 8, 8)
    rel_set = RelationSet(
        fake=rel_images, ground_truth=rel_images, same_class=rel_images, mismatched=rel_images
    )
    total, parts = generator_loss(
        [_half_disc(n)] * 3,
        images,
        _code(n),
        relation_model=relation,
        rel_set=rel_set,
        flags=AblationFlags(),
        kl_weight=1.0,
    )
    expected = 3 * 2 * LOG2 + 4 * LOG3
    assert total.item() == pytest.approx(expected, abs=1e-6)
    assert parts.relation == pytest.approx(4 * LOG3, abs=1e-6)
    assert parts.kl == pytest.approx(0.0, abs=1e-9)
    assert parts.adversarial == pytest.approx([2 * LOG2] * 3, abs=1e-9)


def test_generator_loss_without_relation_supervision():
    n = 2
    images = {s: torch.rand(n, 3, s, s) for s in (8, 16)}
    total, parts = generator_loss(
        [_half_disc(n)] * 2,
        images,
        _code(n),
        flags=AblationFlags(relation_supervisor=False),
    )
    assert total.item() == pytest.approx(sum(parts.adversarial), abs=1e-7)
    assert parts.relation == 0.0


def test_relation_flag_on_requires_model():
    images = {8: torch.rand(2, 3, 8, 8)}
    with pytest.raises(ValueError):
        generator_loss([_half_disc(2)], images, _code(2), flags=AblationFlags())


def test_kl_weight_scales_but_value_always_recorded():
    n = 3
    images = {8: torch.rand(n, 3, 8, 8)}
    code = ConditioningCode(
        mu=torch.ones(n, 4), log_var=torch.zeros(n, 4), code=torch.ones(n, 4)
    )
    kl_value = 2.0  # 0.5 per dim * 4 dims

    total_0, parts_0 = generator_loss(
        [_half_disc(n)], images, code,
        flags=AblationFlags(relation_supervisor=False), kl_weight=0.0,
    )
    total_1, parts_1 = generator_loss(
        [_half_disc(n)], images, code,
        flags=AblationFlags(relation_supervisor=False), kl_weight=1.0,
    )
    total_h, _ = generator_loss(
        [_half_disc(n)], images, code,
        flags=AblationFlags(relation_supervisor=False), kl_weight=0.5,
    )
    assert parts_0.kl == pytest.approx(kl_value, rel=1e-6)
    assert parts_1.kl == pytest.approx(kl_value, rel=1e-6)
    assert total_1.item() - total_0.item() == pytest.approx(kl_value, rel=1e-6)
    assert total_h.item() - total_0.item() == pytest.approx(0.5 * kl_value, rel=1e-6)


def test_saturated_probabilities_stay_finite_and_counted():
    n = 4

    def saturated_disc(images, code):
        return torch.zeros(n, dtype=torch.float64), torch.ones(n, dtype=torch.float64)

    images = torch.rand(n, 3, 8, 8)
    total, parts = discriminator_loss(saturated_disc, images, images, _code(n))
    assert torch.isfinite(total)
    # all four heads return out-of-range values for every item
    assert parts.saturated == 4 * n
    # p_u = 0 clamps the real-uncond term, p_c = 1 clamps the fake-cond
    # term; the other two sit at -log(1 - eps) ~ 0
    assert total.item() == pytest.approx(2 * (-math.log(EPSILON)), rel=1e-3)


def test_scale_count_mismatch_rejected():
    images = {8: torch.rand(1, 3, 8, 8), 16: torch.rand(1, 3, 16, 16)}
    with pytest.raises(ValueError):
        generator_loss(
            [_half_disc(1)], images, _code(1),
            flags=AblationFlags(relation_supervisor=False),
        )


def _fd_vs_analytic(value_fn, tensor, seeds_note="", step=1e-4, rel=1e-3):
    loss = value_fn()
    loss.backward()
    analytic = tensor.grad.clone()
    with torch.no_grad():
        flat = tensor.view(-1)
        numeric = torch.zeros_like(flat)
        for k in range(flat.numel()):
            orig = flat[k].item()
            flat[k] = orig + step
            hi = value_fn().item()
            flat[k] = orig - step
            lo = value_fn().item()
            flat[k] = orig
            numeric[k] = (hi - lo) / (2 * step)
    numeric = numeric.view_as(analytic)
    denom = numeric.abs().clamp_min(1e-3)
    worst = ((analytic - numeric).abs() / denom).max().item()
    assert worst < rel, f"{seeds_note} rel err {worst}"


def test_discriminator_loss_gradient_wrt_pixels():
    for seed in range(3):
        torch.manual_seed(seed)
        disc = ScaleDiscriminator(8, base_channels=4, ca_dim=4).double().eval()
        real = (torch.rand(2, 3, 8, 8, dtype=torch.float64) * 2 - 1).requires_grad_(True)
        fake = torch.rand(2, 3, 8, 8, dtype=torch.float64) * 2 - 1
        code = torch.randn(2, 4, dtype=torch.float64)
        cond = ConditioningCode(mu=code, log_var=torch.zeros_like(code), code=code)

        _fd_vs_analytic(
            lambda: discriminator_loss(disc, real, fake, cond)[0],
            real,
            f"disc seed {seed}",
        )


def test_generator_loss_gradient_wrt_pixels():
    for seed in range(3):
        torch.manual_seed(seed + 50)
        disc = ScaleDiscriminator(8, base_channels=4, ca_dim=4).double().eval()
        relation = RelationClassifier(8, base_channels=4, relation_dim=8).double().eval()
        fake = (torch.rand(2, 3, 8, 8, dtype=torch.float64) * 2 - 1).requires_grad_(True)
        gt = torch.rand(2, 3, 8, 8, dtype=torch.float64) * 2 - 1
        code = torch.randn(2, 4, dtype=torch.float64)
        cond = ConditioningCode(
            mu=code, log_var=torch.zeros_like(code), code=code
        )

        def value():
            rel_set = RelationSet(
                fake=fake, ground_truth=gt, same_class=gt, mismatched=gt
            )
            total, _ = generator_loss(
                [disc], {8: fake}, cond,
                relation_model=relation, rel_set=rel_set,
                flags=AblationFlags(), kl_weight=1.0,
            )
            return total

        _fd_vs_analytic(value, fake, f"gen seed {seed}")
