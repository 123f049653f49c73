"""Feature/classifier backbones behind the quantitative metrics.

Metric numbers are only comparable within one backbone, so every backbone
carries a provenance tag that gets stamped into reports.  The desk-scale
backbone is a small CNN classifier trained on the synthetic corpus; a
pretrained large model can be dropped in through the same interface.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..checkpointing import load_checkpoint, save_checkpoint
from ..dataset import PairedCorpus, batch_indices, stack_images
from ..errors import CompatibilityError

log = logging.getLogger(__name__)


def _to_nchw(images: np.ndarray | torch.Tensor) -> torch.Tensor:
    """Accept [N, H, W, 3] numpy or [N, 3, H, W] tensors."""
    if isinstance(images, np.ndarray):
        if images.ndim != 4 or images.shape[3] != 3:
            raise CompatibilityError(
                f"expected [N, H, W, 3] image array, got {images.shape}"
            )
        return torch.from_numpy(
            np.ascontiguousarray(images.transpose(0, 3, 1, 2))
        ).float()
    if images.dim() != 4 or images.shape[1] != 3:
        raise CompatibilityError(
            f"expected [N, 3, H, W] image tensor, got {tuple(images.shape)}"
        )
    return images.float()


class DeskBackbone(nn.Module):
    """Small CNN classifier; penultimate activations are the feature space."""

    provenance = "desk-scale-trained"

    def __init__(
        self,
        num_classes: int,
        input_size: int = 64,
        base_channels: int = 16,
        feature_dim: int = 64,
    ):
        super().__init__()
        self.num_classes = num_classes
        self.input_size = input_size
        self.base_channels = base_channels
        self.feature_dim = feature_dim
        num_downs = int(math.log2(input_size // 4))
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
        self.trunk = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc_feature = nn.Linear(ch, feature_dim)
        self.fc_class = nn.Linear(feature_dim, num_classes)

    def _check(self, x: torch.Tensor) -> None:
        if x.shape[2] != self.input_size or x.shape[3] != self.input_size:
            raise CompatibilityError(
                f"backbone expects {self.input_size}px inputs, got {tuple(x.shape)}"
            )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        self._check(images)
        feats = F.relu(self.fc_feature(self.pool(self.trunk(images)).flatten(1)))
        return self.fc_class(feats)

    @torch.no_grad()
    def features(self, images: np.ndarray | torch.Tensor, batch_size: int = 64) -> np.ndarray:
        """Penultimate features as float32 [N, feature_dim]."""
        self.eval()
        x = _to_nchw(images)
        self._check(x)
        outs = []
        for start in range(0, x.shape[0], batch_size):
            part = x[start : start + batch_size]
            feats = F.relu(self.fc_feature(self.pool(self.trunk(part)).flatten(1)))
            outs.append(feats.numpy())
        return np.concatenate(outs, axis=0).astype(np.float32)

    @torch.no_grad()
    def class_probabilities(
        self, images: np.ndarray | torch.Tensor, batch_size: int = 64
    ) -> np.ndarray:
        """Softmax class posteriors as float32 [N, num_classes]."""
        self.eval()
        x = _to_nchw(images)
        outs = []
        for start in range(0, x.shape[0], batch_size):
            logits = self.forward(x[start : start + batch_size])
            outs.append(torch.softmax(logits, dim=1).numpy())
        return np.concatenate(outs, axis=0).astype(np.float32)


class InceptionBackbone(nn.Module):
    """Full-scale alternative; requires the torchvision extra.

    Supply a local state-dict path for pretrained weights; nothing is
    downloaded.
    """

    provenance = "pretrained-large"

    def __init__(self, weights_path: str | None = None, input_size: int = 256):
        super().__init__()
        try:
            from torchvision.models import inception_v3
        except ImportError as exc:  # pragma: no cover - optional extra
            raise CompatibilityError(
                "inception backbone requires the torchvision extra"
            ) from exc
        self.input_size = input_size
        self.num_classes = 1000
        self.feature_dim = 2048
        net = inception_v3(weights=None, aux_logits=True, init_weights=True)
        if weights_path:
            net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        net.eval()
        self.net = net

    def _prepare(self, images: np.ndarray | torch.Tensor) -> torch.Tensor:
        x = _to_nchw(images)
        return F.interpolate(x, size=(299, 299), mode="bilinear", align_corners=False)

    @torch.no_grad()
    def features(self, images, batch_size: int = 16) -> np.ndarray:
        x = self._prepare(images)
        fc = self.net.fc
        self.net.fc = nn.Identity()
        try:
            outs = [
                self.net(x[s : s + batch_size]).numpy()
                for s in range(0, x.shape[0], batch_size)
            ]
        finally:
            self.net.fc = fc
        return np.concatenate(outs, axis=0).astype(np.float32)

    @torch.no_grad()
    def class_probabilities(self, images, batch_size: int = 16) -> np.ndarray:
        x = self._prepare(images)
        outs = [
            torch.softmax(self.net(x[s : s + batch_size]), dim=1).numpy()
            for s in range(0, x.shape[0], batch_size)
        ]
        return np.concatenate(outs, axis=0).astype(np.float32)


def train_eval_backbone(
    corpus: PairedCorpus,
    num_classes: int,
    input_size: int = 64,
    base_channels: int = 16,
    feature_dim: int = 64,
    epochs: int = 30,
    batch_size: int = 16,
    learning_rate: float = 1e-3,
    seed: int = 0,
) -> tuple[DeskBackbone, float]:
    """Fit the desk-scale classifier; returns (backbone, final train accuracy)."""
    if input_size not in corpus.scales:
        raise CompatibilityError(
            f"corpus pyramid lacks the {input_size}px scale (has {corpus.scales})"
        )
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = DeskBackbone(num_classes, input_size, base_channels, feature_dim)
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    model.train()
    accuracy = 0.0
    for _ in range(epochs):
        hits = total = 0
        for idx in batch_indices(len(corpus), batch_size, rng, drop_last=False):
            if idx.size < 2:
                continue
            samples = [corpus.sample(int(i)) for i in idx]
            images = torch.from_numpy(stack_images(samples, input_size))
            labels = torch.tensor([s.class_id for s in samples], dtype=torch.long)
            logits = model(images)
            loss = F.cross_entropy(logits, labels)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            hits += int((logits.argmax(dim=1) == labels).sum().item())
            total += len(samples)
        accuracy = hits / max(total, 1)
    model.eval()
    log.info("desk backbone trained: final train accuracy %.3f", accuracy)
    return model, accuracy


def save_backbone(path: str | Path, model: DeskBackbone, accuracy: float) -> Path:
    return save_checkpoint(
        path,
        "eval_backbone",
        {
            "model": model.state_dict(),
            "num_classes": model.num_classes,
            "input_size": model.input_size,
            "base_channels": model.base_channels,
            "feature_dim": model.feature_dim,
            "provenance": model.provenance,
            "train_accuracy": accuracy,
        },
    )


def load_backbone(path: str | Path) -> DeskBackbone:
    payload = load_checkpoint(path, kind="eval_backbone")
    model = DeskBackbone(
        num_classes=payload["num_classes"],
        input_size=payload["input_size"],
        base_channels=payload["base_channels"],
        feature_dim=payload["feature_dim"],
    )
    model.load_state_dict(payload["model"])
    model.eval()
    return model


FEATURE_CACHE_VERSION = 1


def save_feature_cache(path: str | Path, features: np.ndarray, class_ids: np.ndarray) -> None:
    """Persist extracted features as a small versioned binary container."""
    np.savez(
        path,
        version=np.int64(FEATURE_CACHE_VERSION),
        features=features.astype(np.float32),
        class_ids=class_ids.astype(np.int64),
    )


def load_feature_cache(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with np.load(path) as data:
        version = int(data["version"])
        if version != FEATURE_CACHE_VERSION:
            raise CompatibilityError(
                f"{path}: feature cache version {version} unsupported"
            )
        return data["features"], data["class_ids"]
