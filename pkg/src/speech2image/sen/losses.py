"""Objectives for the dual speech/image embedding network.

The matching loss is a bidirectional masked softmax cross-entropy over
cosine similarities: within a batch only the paired (image, speech) item
counts as positive, and other items of the same class are removed from the
softmax denominator via a binary mask.  The distinctive loss is plain
class cross-entropy on both modalities after a linear perception layer.
Both losses are sums over the batch, not means.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class EmbeddingBatch:
    image_emb: torch.Tensor  # [n, D]
    speech_emb: torch.Tensor  # [n, D]
    class_ids: torch.Tensor  # [n] long
    mask: torch.Tensor  # [n, n] float, 1 keeps a pair in the denominator

    @classmethod
    def from_parts(
        cls,
        image_emb: torch.Tensor,
        speech_emb: torch.Tensor,
        class_ids: torch.Tensor,
    ) -> "EmbeddingBatch":
        return cls(image_emb, speech_emb, class_ids, class_mask(class_ids))


def class_mask(class_ids: torch.Tensor) -> torch.Tensor:
    """Denominator mask: zero for same-class off-diagonal pairs, one elsewhere.

    The diagonal is always one; it is the positive pair itself.
    """
    ids = class_ids.view(-1, 1)
    same = ids.eq(ids.t())
    mask = (~same).float()
    mask.fill_diagonal_(1.0)
    return mask


def similarity_matrix(speech_emb: torch.Tensor, image_emb: torch.Tensor) -> torch.Tensor:
    """Cosine similarities: entry (i, j) compares speech i with image j."""
    speech_norm = speech_emb.norm(dim=1)
    image_norm = image_emb.norm(dim=1)
    if (speech_norm == 0).any() or (image_norm == 0).any():
        raise ValueError("zero-norm embedding has no cosine direction")
    s = speech_emb / speech_norm.unsqueeze(1)
    v = image_emb / image_norm.unsqueeze(1)
    return s @ v.t()


def _masked_direction_loss(
    logits: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """-sum_i log( exp(logits_ii) / sum_j mask_ij * exp(logits_ij) )."""
    row_active = mask.sum(dim=1)
    if (row_active <= 0).any():
        raise ValueError("a softmax row is fully masked; cannot normalize")
    neg_inf = torch.finfo(logits.dtype).min
    masked = torch.where(mask > 0, logits, torch.full_like(logits, neg_inf))
    log_denom = torch.logsumexp(masked, dim=1)
    return (log_denom - logits.diagonal()).sum()


def matching_loss(batch: EmbeddingBatch, smoothing: float = 10.0) -> torch.Tensor:
    """Bidirectional masked matching loss over a batch of embedding pairs."""
    if smoothing <= 0:
        raise ValueError("smoothing factor must be positive")
    sims = similarity_matrix(batch.speech_emb, batch.image_emb)
    logits = smoothing * sims
    speech_to_image = _masked_direction_loss(logits, batch.mask)
    image_to_speech = _masked_direction_loss(logits.t(), batch.mask.t())
    return speech_to_image + image_to_speech


def distinctive_loss(
    speech_logits: torch.Tensor,
    image_logits: torch.Tensor,
    class_ids: torch.Tensor,
) -> torch.Tensor:
    """Class cross-entropy on both modalities, summed over the batch."""
    num_classes = speech_logits.shape[1]
    if class_ids.min() < 0 or class_ids.max() >= num_classes:
        raise ValueError(
            f"class id outside [0, {num_classes}): {class_ids.min()}..{class_ids.max()}"
        )
    loss_speech = F.cross_entropy(speech_logits, class_ids, reduction="sum")
    loss_image = F.cross_entropy(image_logits, class_ids, reduction="sum")
    return loss_speech + loss_image


def sen_total_loss(
    batch: EmbeddingBatch,
    speech_logits: torch.Tensor,
    image_logits: torch.Tensor,
    smoothing: float = 10.0,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Total embedding objective; returns (total, matching, distinctive)."""
    l_match = matching_loss(batch, smoothing)
    l_dist = distinctive_loss(speech_logits, image_logits, batch.class_ids)
    return l_match + l_dist, l_match, l_dist
