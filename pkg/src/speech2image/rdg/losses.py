"""Adversarial objectives for the stacked generator and its discriminators.

Every scale contributes an unconditional (realism) and a conditional
(description-agreement) branch.  Discriminator probabilities are clamped to
[eps, 1-eps] before the log so a saturated discriminator yields large but
finite losses; each clamp is counted and surfaced as telemetry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import torch

from .networks import AblationFlags, ConditioningCode, ImagePyramid
from .relation import RelationClassifier, RelationSet, relation_supervisor_loss

EPSILON = 1e-7

# a discriminator handle: (images, code) -> (p_uncond, p_cond)
DiscHandle = Callable[[torch.Tensor, torch.Tensor], tuple[torch.Tensor, torch.Tensor]]


def _saturation_count(p: torch.Tensor) -> int:
    return int(((p < EPSILON) | (p > 1 - EPSILON)).sum().item())


def _mean_neg_log(p: torch.Tensor) -> torch.Tensor:
    return -p.clamp(min=EPSILON, max=1 - EPSILON).log().mean()


@dataclass
class DiscLossParts:
    real_uncond: float
    fake_uncond: float
    real_cond: float
    fake_cond: float
    saturated: int


def discriminator_loss(
    disc: DiscHandle,
    real: torch.Tensor,
    fake: torch.Tensor,
    cond: ConditioningCode,
) -> tuple[torch.Tensor, DiscLossParts]:
    """Four-term objective for one scale's discriminator.

    ``fake`` should be detached by the caller; the condition code is used
    as-is for both real and fake conditional branches.
    """
    code = cond.code
    p_real_u, p_real_c = disc(real, code)
    p_fake_u, p_fake_c = disc(fake, code)
    saturated = sum(
        _saturation_count(p) for p in (p_real_u, p_real_c, p_fake_u, p_fake_c)
    )
    term_ru = _mean_neg_log(p_real_u)
    term_fu = _mean_neg_log(1 - p_fake_u)
    term_rc = _mean_neg_log(p_real_c)
    term_fc = _mean_neg_log(1 - p_fake_c)
    total = term_ru + term_fu + term_rc + term_fc
    parts = DiscLossParts(
        real_uncond=float(term_ru.item()),
        fake_uncond=float(term_fu.item()),
        real_cond=float(term_rc.item()),
        fake_cond=float(term_fc.item()),
        saturated=saturated,
    )
    return total, parts


@dataclass
class GenLossParts:
    adversarial: list[float] = field(default_factory=list)
    relation: float = 0.0
    kl: float = 0.0
    saturated: int = 0


def generator_loss(
    discriminators: Sequence[DiscHandle],
    pyramid: ImagePyramid | dict[int, torch.Tensor],
    cond: ConditioningCode,
    relation_model: RelationClassifier | None = None,
    rel_set: RelationSet | None = None,
    flags: AblationFlags = AblationFlags(),
    kl_weight: float = 1.0,
) -> tuple[torch.Tensor, GenLossParts]:
    """Generator objective over all scales.

    Sum of -log D_i(I_i) - log D_i(I_i, c) across scales, plus the full
    relation-supervision value when enabled, plus the weighted KL of the
    conditioning code.  Discriminator parameters must not be stepped from
    this loss; only the generator side optimizes it.
    """
    images = pyramid.images if isinstance(pyramid, ImagePyramid) else pyramid
    ordered = [images[scale] for scale in sorted(images)]
    if len(ordered) != len(discriminators):
        raise ValueError(
            f"{len(discriminators)} discriminators for {len(ordered)} pyramid scales"
        )
    parts = GenLossParts()
    total = torch.zeros((), dtype=ordered[0].dtype, device=ordered[0].device)
    for disc, fake in zip(discriminators, ordered):
        p_uncond, p_cond = disc(fake, cond.code)
        parts.saturated += _saturation_count(p_uncond) + _saturation_count(p_cond)
        term = _mean_neg_log(p_uncond) + _mean_neg_log(p_cond)
        parts.adversarial.append(float(term.item()))
        total = total + term
    if flags.relation_supervisor:
        if relation_model is None or rel_set is None:
            raise ValueError(
                "relation supervision enabled but no classifier/relation set given"
            )
        rs_total, _ = relation_supervisor_loss(relation_model, rel_set)
        parts.relation = float(rs_total.item())
        total = total + rs_total
    if kl_weight:
        kl = cond.kl
        parts.kl = float(kl.item())
        total = total + kl_weight * kl
    else:
        parts.kl = float(cond.kl.item())
    return total, parts
