"""Dual encoders projecting images and spectrograms into a common space.

The speech side is two strided 1-D convolutions, a two-layer bidirectional
GRU and a single-head additive self-attention pool; padding is masked at
every stage so the embedding of an utterance never depends on how far its
batch was padded.  The image side is a pluggable feature backbone followed
by one linear map.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..errors import CompatibilityError


def _conv_out_lengths(lengths: torch.Tensor) -> torch.Tensor:
    # kernel 5, stride 2, padding 2 -> ceil(L / 2)
    return torch.div(lengths + 1, 2, rounding_mode="floor")


class SpeechEncoder(nn.Module):
    def __init__(
        self,
        num_mel: int = 40,
        conv_channels: int = 128,
        gru_hidden: int = 256,
        attention_dim: int = 128,
        embedding_dim: int = 1024,
    ):
        super().__init__()
        self.num_mel = num_mel
        self.embedding_dim = embedding_dim
        self.conv1 = nn.Conv1d(num_mel, conv_channels, kernel_size=5, stride=2, padding=2)
        self.conv2 = nn.Conv1d(conv_channels, conv_channels, kernel_size=5, stride=2, padding=2)
        self.gru = nn.GRU(
            conv_channels,
            gru_hidden,
            num_layers=2,
            bidirectional=True,
            batch_first=True,
        )
        self.attn_hidden = nn.Linear(2 * gru_hidden, attention_dim)
        self.attn_score = nn.Linear(attention_dim, 1, bias=False)
        self.proj = nn.Linear(2 * gru_hidden, embedding_dim)

    def forward(self, frames: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """frames: [B, T, num_mel]; lengths: [B] true frame counts."""
        if frames.dim() != 3 or frames.shape[2] != self.num_mel:
            raise CompatibilityError(
                f"expected [B, T, {self.num_mel}] spectrogram batch, got {tuple(frames.shape)}"
            )
        lengths = lengths.to(torch.long)
        if (lengths <= 0).any():
            raise ValueError("true_length must be positive for every item")
        if (lengths > frames.shape[1]).any():
            raise ValueError("true_length exceeds padded length")

        # Zero padding before convolution: padded taps then contribute the
        # same (nothing) no matter how long the padding is.
        t_idx = torch.arange(frames.shape[1], device=frames.device)
        mask = (t_idx.unsqueeze(0) < lengths.unsqueeze(1)).to(frames.dtype)
        x = (frames * mask.unsqueeze(2)).transpose(1, 2)  # [B, M, T]

        x = torch.relu(self.conv1(x))
        lengths1 = _conv_out_lengths(lengths)
        t1 = torch.arange(x.shape[2], device=x.device)
        x = x * (t1.unsqueeze(0) < lengths1.unsqueeze(1)).to(x.dtype).unsqueeze(1)

        x = torch.relu(self.conv2(x))
        lengths2 = _conv_out_lengths(lengths1)
        t2 = torch.arange(x.shape[2], device=x.device)
        x = x * (t2.unsqueeze(0) < lengths2.unsqueeze(1)).to(x.dtype).unsqueeze(1)

        packed = pack_padded_sequence(
            x.transpose(1, 2), lengths2.cpu(), batch_first=True, enforce_sorted=False
        )
        outputs, _ = self.gru(packed)
        hidden, _ = pad_packed_sequence(outputs, batch_first=True)  # [B, T2, 2H]

        scores = self.attn_score(torch.tanh(self.attn_hidden(hidden))).squeeze(2)
        t_out = torch.arange(hidden.shape[1], device=hidden.device)
        valid = t_out.unsqueeze(0) < lengths2.unsqueeze(1)
        scores = scores.masked_fill(~valid, torch.finfo(scores.dtype).min)
        weights = torch.softmax(scores, dim=1)
        pooled = torch.bmm(weights.unsqueeze(1), hidden).squeeze(1)
        return self.proj(pooled)


class DeskImageBackbone(nn.Module):
    """Small strided CNN standing in for a large pretrained extractor."""

    def __init__(self, input_size: int = 256, base_channels: int = 32):
        super().__init__()
        self.input_size = input_size
        c = base_channels
        channels = [3, c, 2 * c, 4 * c, 4 * c, 8 * c]
        layers: list[nn.Module] = []
        for cin, cout in zip(channels[:-1], channels[1:]):
            layers.append(nn.Conv2d(cin, cout, kernel_size=4, stride=2, padding=1))
            layers.append(nn.ReLU(inplace=True))
        self.body = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.feature_dim = channels[-1]

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.pool(self.body(images)).flatten(1)


class InceptionV3Backbone(nn.Module):
    """Optional full-scale extractor; requires torchvision.

    Pass a local ``weights_path`` with a state dict to use pretrained
    weights; nothing is downloaded.
    """

    def __init__(self, input_size: int = 256, weights_path: str | None = None):
        super().__init__()
        try:
            from torchvision.models import inception_v3
        except ImportError as exc:  # pragma: no cover - optional extra
            raise CompatibilityError(
                "inception_v3 backbone requires the torchvision extra"
            ) from exc
        self.input_size = input_size
        net = inception_v3(weights=None, aux_logits=True, init_weights=True)
        if weights_path is not None:
            net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        net.fc = nn.Identity()
        net.aux_logits = False
        net.AuxLogits = None
        self.net = net
        self.feature_dim = 2048

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = torch.nn.functional.interpolate(
            images, size=(299, 299), mode="bilinear", align_corners=False
        )
        return self.net(x)


def build_backbone(name: str, input_size: int, base_channels: int) -> nn.Module:
    if name == "desk":
        return DeskImageBackbone(input_size, base_channels)
    if name == "inception_v3":
        return InceptionV3Backbone(input_size)
    raise CompatibilityError(f"unknown image backbone {name!r}")


class ImageEncoder(nn.Module):
    def __init__(self, backbone: nn.Module, embedding_dim: int, freeze_backbone: bool = True):
        super().__init__()
        self.backbone = backbone
        self.embedding_dim = embedding_dim
        self.frozen = freeze_backbone
        if freeze_backbone:
            for p in self.backbone.parameters():
                p.requires_grad_(False)
        self.proj = nn.Linear(backbone.feature_dim, embedding_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        expected = self.backbone.input_size
        if images.dim() != 4 or images.shape[2] != expected or images.shape[3] != expected:
            raise CompatibilityError(
                f"image encoder expects [B, 3, {expected}, {expected}], got {tuple(images.shape)}"
            )
        if self.frozen:
            with torch.no_grad():
                feats = self.backbone(images)
        else:
            feats = self.backbone(images)
        return self.proj(feats)


class SpeechImageEmbedder(nn.Module):
    """The full dual-encoder model plus per-modality perception layers.

    The perception layers share their structure but not their weights: the
    two modalities occupy differently shaped regions of the common space.
    """

    def __init__(
        self,
        num_classes: int,
        num_mel: int = 40,
        embedding_dim: int = 1024,
        conv_channels: int = 128,
        gru_hidden: int = 256,
        attention_dim: int = 128,
        backbone: str = "desk",
        backbone_channels: int = 32,
        image_size: int = 256,
        freeze_backbone: bool = True,
    ):
        super().__init__()
        self.num_classes = num_classes
        self.embedding_dim = embedding_dim
        self.speech_encoder = SpeechEncoder(
            num_mel=num_mel,
            conv_channels=conv_channels,
            gru_hidden=gru_hidden,
            attention_dim=attention_dim,
            embedding_dim=embedding_dim,
        )
        self.image_encoder = ImageEncoder(
            build_backbone(backbone, image_size, backbone_channels),
            embedding_dim,
            freeze_backbone,
        )
        self.speech_head = nn.Linear(embedding_dim, num_classes)
        self.image_head = nn.Linear(embedding_dim, num_classes)

    def encode_speech(self, frames: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        return self.speech_encoder(frames, lengths)

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return self.image_encoder(images)

    def class_logits(
        self, speech_emb: torch.Tensor, image_emb: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        return self.speech_head(speech_emb), self.image_head(image_emb)
