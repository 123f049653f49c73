"""Relation supervision: classify how a pair of images relates.

A shared conv encoder maps each image to a feature vector; a pair is
described by concatenating the elementwise product and difference of the
two features (order matters: the anchor is always the ground-truth image).
A 3-way classifier scores the pair as positive (same class), negative
(different class) or undesired (the very same image twice).  The loss adds
a fourth term asking the fake image to relate positively to its ground
truth; it applies only at the top pyramid scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import CompatibilityError

LABEL_POSITIVE = 0  # anchor with a same-class real image
LABEL_NEGATIVE = 1  # anchor with a mismatched-class real image
LABEL_UNDESIRED = 2  # anchor with itself


@dataclass
class RelationSet:
    """The four images entering relation supervision, all at one scale."""

    fake: torch.Tensor
    ground_truth: torch.Tensor
    same_class: torch.Tensor
    mismatched: torch.Tensor


class RelationClassifier(nn.Module):
    """Shared conv encoder + pairing head.

    The encoder keeps the 4x4 spatial map (flatten, not pool): the cue
    separating "same class" from "same image" is small geometric jitter,
    which global pooling would average away.  Features are tanh-saturated
    so a self-pair's elementwise products concentrate near 1 while an
    independent pair's keep random signs; that gap is what the linear
    head reads off the product half of the relation vector.
    """

    def __init__(self, image_size: int, base_channels: int = 32, relation_dim: int = 128):
        super().__init__()
        if relation_dim % 2:
            raise ValueError("relation_dim must be even")
        if image_size < 8 or image_size & (image_size - 1):
            raise ValueError(f"image_size must be a power of two >= 8, got {image_size}")
        self.image_size = image_size
        self.relation_dim = relation_dim
        num_downs = int(math.log2(image_size // 4))
        layers: list[nn.Module] = [
            nn.Conv2d(3, base_channels, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        ch = base_channels
        for _ in range(num_downs - 1):
            nxt = min(ch * 2, base_channels * 8)
            layers.append(nn.Conv2d(ch, nxt, kernel_size=4, stride=2, padding=1))
            layers.append(nn.BatchNorm2d(nxt))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            ch = nxt
        self.encoder = nn.Sequential(*layers)
        self.project = nn.Linear(ch * 16, relation_dim // 2)
        self.head = nn.Linear(relation_dim, 3)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        if (
            images.dim() != 4
            or images.shape[2] != self.image_size
            or images.shape[3] != self.image_size
        ):
            raise CompatibilityError(
                f"relation encoder expects [B, 3, {self.image_size}, {self.image_size}], "
                f"got {tuple(images.shape)}"
            )
        return torch.tanh(self.project(self.encoder(images).flatten(1)))

    def relation_vector(self, anchor: torch.Tensor, other: torch.Tensor) -> torch.Tensor:
        """Pair descriptor: product ++ difference of encoded features."""
        if anchor.shape != other.shape:
            raise CompatibilityError(
                f"paired images must share a shape, got {tuple(anchor.shape)} "
                f"vs {tuple(other.shape)}"
            )
        fa = self.encode(anchor)
        fb = self.encode(other)
        return torch.cat([fa * fb, fa - fb], dim=1)

    def forward(self, anchor: torch.Tensor, other: torch.Tensor) -> torch.Tensor:
        return self.head(self.relation_vector(anchor, other))


def real_relation_loss(
    model: RelationClassifier,
    ground_truth: torch.Tensor,
    same_class: torch.Tensor,
    mismatched: torch.Tensor,
) -> torch.Tensor:
    """The three real-pair terms; this is what trains the classifier."""
    device = ground_truth.device
    n = ground_truth.shape[0]
    loss = F.cross_entropy(
        model(ground_truth, same_class),
        torch.full((n,), LABEL_POSITIVE, dtype=torch.long, device=device),
    )
    loss = loss + F.cross_entropy(
        model(ground_truth, mismatched),
        torch.full((n,), LABEL_NEGATIVE, dtype=torch.long, device=device),
    )
    loss = loss + F.cross_entropy(
        model(ground_truth, ground_truth),
        torch.full((n,), LABEL_UNDESIRED, dtype=torch.long, device=device),
    )
    return loss


def fake_relation_loss(model: RelationClassifier, rel_set: RelationSet) -> torch.Tensor:
    """The fake-pair term: the generated image should read as positive."""
    n = rel_set.ground_truth.shape[0]
    return F.cross_entropy(
        model(rel_set.ground_truth, rel_set.fake),
        torch.full(
            (n,), LABEL_POSITIVE, dtype=torch.long, device=rel_set.ground_truth.device
        ),
    )


def relation_supervisor_loss(
    model: RelationClassifier, rel_set: RelationSet
) -> tuple[torch.Tensor, dict[str, float]]:
    """All four cross-entropy terms (three real pairs + the fake pair)."""
    real = real_relation_loss(
        model, rel_set.ground_truth, rel_set.same_class, rel_set.mismatched
    )
    fake = fake_relation_loss(model, rel_set)
    total = real + fake
    return total, {"real_pairs": float(real.item()), "fake_pair": float(fake.item())}


@torch.no_grad()
def relation_accuracy(
    model: RelationClassifier,
    ground_truth: torch.Tensor,
    same_class: torch.Tensor,
    mismatched: torch.Tensor,
) -> float:
    """Fraction of real-pair relations classified correctly."""
    preds = [
        (model(ground_truth, same_class).argmax(dim=1), LABEL_POSITIVE),
        (model(ground_truth, mismatched).argmax(dim=1), LABEL_NEGATIVE),
        (model(ground_truth, ground_truth).argmax(dim=1), LABEL_UNDESIRED),
    ]
    hits = sum((p == target).sum().item() for p, target in preds)
    return hits / (3 * ground_truth.shape[0])
