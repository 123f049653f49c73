"""Generator-side networks: conditioning augmentation, the densely-stacked
multi-scale generator, and the per-scale discriminators.

The generator exposes its stage computation piecewise (``initial_hidden`` /
``next_hidden`` / ``to_image``) so tests can splice arbitrary hidden tensors
into the graph and verify which stages actually consume which inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import CompatibilityError


@dataclass(frozen=True)
class AblationFlags:
    """Component switches; every checkpoint and report records them."""

    dense_stacking: bool = True
    relation_supervisor: bool = True
    use_sen_embeddings: bool = True

    def as_dict(self) -> dict[str, bool]:
        return {
            "dense_stacking": self.dense_stacking,
            "relation_supervisor": self.relation_supervisor,
            "use_sen_embeddings": self.use_sen_embeddings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationFlags":
        return cls(
            dense_stacking=bool(d.get("dense_stacking", True)),
            relation_supervisor=bool(d.get("relation_supervisor", True)),
            use_sen_embeddings=bool(d.get("use_sen_embeddings", True)),
        )


def gaussian_kl(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma^2) || N(0, I)), summed over dims, averaged over batch."""
    per_item = 0.5 * (mu.pow(2) + log_var.exp() - log_var - 1.0).sum(dim=1)
    return per_item.mean()


@dataclass
class ConditioningCode:
    mu: torch.Tensor
    log_var: torch.Tensor
    code: torch.Tensor  # the vector actually fed to G and D

    @property
    def kl(self) -> torch.Tensor:
        return gaussian_kl(self.mu, self.log_var)


class ConditioningAugmenter(nn.Module):
    """Map a condition vector to a Gaussian code; sample in train mode."""

    def __init__(self, input_dim: int, ca_dim: int = 128):
        super().__init__()
        self.input_dim = input_dim
        self.ca_dim = ca_dim
        self.fc = nn.Linear(input_dim, 2 * ca_dim)

    def forward(
        self,
        features: torch.Tensor,
        mode: str = "train",
        generator: torch.Generator | None = None,
    ) -> ConditioningCode:
        if features.dim() != 2 or features.shape[1] != self.input_dim:
            raise CompatibilityError(
                f"conditioning input must be [B, {self.input_dim}], got {tuple(features.shape)}"
            )
        if not torch.isfinite(features).all():
            raise ValueError("conditioning input contains non-finite values")
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be train or infer, got {mode!r}")
        stats = self.fc(features)
        mu, log_var = stats.chunk(2, dim=1)
        if mode == "infer":
            code = mu
        else:
            eps = torch.randn(
                mu.shape, generator=generator, dtype=mu.dtype, device=mu.device
            )
            code = mu + (0.5 * log_var).exp() * eps
        return ConditioningCode(mu=mu, log_var=log_var, code=code)


def _upsample_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(cin, cout, kernel_size=3, stride=1, padding=1),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


def _hidden_resolution(scale: int) -> int:
    # hidden maps live at quarter resolution; the image head upsamples x4
    return max(scale // 4, 4)


class _InitialStage(nn.Module):
    """First stage: fully-connected lift of z ++ c, then upsampling convs."""

    def __init__(self, noise_dim: int, ca_dim: int, base_channels: int, out_res: int):
        super().__init__()
        self.out_res = out_res
        num_ups = int(math.log2(out_res // 4))
        start = base_channels * (2**num_ups)
        self.fc = nn.Sequential(
            nn.Linear(noise_dim + ca_dim, start * 4 * 4),
            nn.BatchNorm1d(start * 4 * 4),
            nn.ReLU(inplace=True),
        )
        self.start_channels = start
        ups = []
        ch = start
        for _ in range(num_ups):
            ups.append(_upsample_conv(ch, ch // 2))
            ch //= 2
        self.ups = nn.Sequential(*ups)

    def forward(self, z: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        x = self.fc(torch.cat([z, code], dim=1))
        x = x.view(x.shape[0], self.start_channels, 4, 4)
        return self.ups(x)


class _FusionStage(nn.Module):
    """Later stage: fuse prior hidden maps with the condition, upsample."""

    def __init__(
        self,
        num_inputs: int,
        base_channels: int,
        ca_dim: int,
        in_res: int,
        out_res: int,
    ):
        super().__init__()
        self.in_res = in_res
        self.out_res = out_res
        self.join = nn.Sequential(
            nn.Conv2d(
                num_inputs * base_channels + ca_dim,
                base_channels,
                kernel_size=3,
                stride=1,
                padding=1,
            ),
            nn.BatchNorm2d(base_channels),
            nn.ReLU(inplace=True),
        )
        ups = []
        for _ in range(int(math.log2(out_res // in_res))):
            ups.append(_upsample_conv(base_channels, base_channels))
        self.ups = nn.Sequential(*ups)

    def forward(self, hiddens: list[torch.Tensor], code: torch.Tensor) -> torch.Tensor:
        resized = [
            h
            if h.shape[-1] == self.in_res
            else F.interpolate(h, size=(self.in_res, self.in_res), mode="nearest")
            for h in hiddens
        ]
        spatial_code = code[:, :, None, None].expand(-1, -1, self.in_res, self.in_res)
        x = self.join(torch.cat(resized + [spatial_code], dim=1))
        return self.ups(x)


class _ImageHead(nn.Module):
    def __init__(self, base_channels: int, in_res: int, out_res: int):
        super().__init__()
        mid = max(base_channels // 2, 4)
        num_ups = int(math.log2(out_res // in_res))
        layers: list[nn.Module] = []
        ch = base_channels
        for k in range(num_ups - 1):
            layers.append(_upsample_conv(ch, mid))
            ch = mid
        layers.append(nn.Upsample(scale_factor=2, mode="nearest"))
        layers.append(nn.Conv2d(ch, 3, kernel_size=3, stride=1, padding=1))
        layers.append(nn.Tanh())
        self.net = nn.Sequential(*layers)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.net(hidden)


@dataclass
class ImagePyramid:
    """Per-stage hidden maps and the images decoded from them."""

    hiddens: list[torch.Tensor]
    images: dict[int, torch.Tensor] = field(default_factory=dict)

    def final_image(self) -> torch.Tensor:
        return self.images[max(self.images)]


class DenselyStackedGenerator(nn.Module):
    """Multi-scale generator; each stage may consume all earlier hiddens.

    With dense stacking enabled, stage i fuses h_0..h_{i-1} plus the
    condition code; disabled, it sees only h_{i-1}.  Stage 0 lifts the
    noise ++ code vector instead.
    """

    def __init__(
        self,
        noise_dim: int = 100,
        ca_dim: int = 128,
        base_channels: int = 64,
        scales: tuple[int, ...] = (64, 128, 256),
        dense_stacking: bool = True,
    ):
        super().__init__()
        if not scales or list(scales) != sorted(set(scales)):
            raise ValueError(f"scales must be non-empty and strictly ascending, got {scales}")
        self.noise_dim = noise_dim
        self.ca_dim = ca_dim
        self.base_channels = base_channels
        self.scales = tuple(scales)
        self.dense_stacking = dense_stacking
        self.resolutions = [_hidden_resolution(s) for s in scales]

        self.initial = _InitialStage(noise_dim, ca_dim, base_channels, self.resolutions[0])
        fusions = []
        for i in range(1, len(scales)):
            fusions.append(
                _FusionStage(
                    num_inputs=i if dense_stacking else 1,
                    base_channels=base_channels,
                    ca_dim=ca_dim,
                    in_res=self.resolutions[i - 1],
                    out_res=self.resolutions[i],
                )
            )
        self.fusions = nn.ModuleList(fusions)
        self.heads = nn.ModuleList(
            _ImageHead(base_channels, r, s) for r, s in zip(self.resolutions, scales)
        )

    def _check_vectors(self, z: torch.Tensor, code: torch.Tensor) -> None:
        if z.dim() != 2 or z.shape[1] != self.noise_dim:
            raise CompatibilityError(
                f"noise must be [B, {self.noise_dim}], got {tuple(z.shape)}"
            )
        if code.dim() != 2 or code.shape[1] != self.ca_dim:
            raise CompatibilityError(
                f"condition code must be [B, {self.ca_dim}], got {tuple(code.shape)}"
            )
        if z.shape[0] != code.shape[0]:
            raise CompatibilityError("noise and code batch sizes differ")

    def initial_hidden(self, z: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        self._check_vectors(z, code)
        return self.initial(z, code)

    def next_hidden(
        self, stage: int, hiddens: list[torch.Tensor], code: torch.Tensor
    ) -> torch.Tensor:
        """Compute h_stage from the earlier hidden maps.

        ``hiddens`` must list h_0..h_{stage-1}; without dense stacking only
        the last entry is consumed.
        """
        if not 1 <= stage < len(self.scales):
            raise ValueError(f"stage must be in [1, {len(self.scales) - 1}], got {stage}")
        if len(hiddens) != stage:
            raise ValueError(f"stage {stage} expects {stage} prior hiddens, got {len(hiddens)}")
        fusion = self.fusions[stage - 1]
        inputs = hiddens if self.dense_stacking else hiddens[-1:]
        return fusion(inputs, code)

    def to_image(self, stage: int, hidden: torch.Tensor) -> torch.Tensor:
        return self.heads[stage](hidden)

    def forward(self, z: torch.Tensor, code: torch.Tensor) -> ImagePyramid:
        hiddens = [self.initial_hidden(z, code)]
        for stage in range(1, len(self.scales)):
            hiddens.append(self.next_hidden(stage, hiddens, code))
        images = {
            scale: self.to_image(stage, h)
            for stage, (scale, h) in enumerate(zip(self.scales, hiddens))
        }
        return ImagePyramid(hiddens=hiddens, images=images)


class ScaleDiscriminator(nn.Module):
    """One per pyramid scale; scores realism plus condition agreement.

    Both heads emit probabilities in (0, 1); the condition is replicated
    over the 4x4 trunk output and fused by a 3x3 conv.
    """

    def __init__(self, scale: int, base_channels: int = 64, ca_dim: int = 128):
        super().__init__()
        if scale < 8 or scale & (scale - 1):
            raise ValueError(f"scale must be a power of two >= 8, got {scale}")
        self.scale = scale
        self.ca_dim = ca_dim
        num_downs = int(math.log2(scale // 4))
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
        self.trunk_channels = ch
        self.uncond_head = nn.Conv2d(ch, 1, kernel_size=4, stride=1, padding=0)
        self.cond_join = nn.Sequential(
            nn.Conv2d(ch + ca_dim, ch, kernel_size=3, stride=1, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.cond_head = nn.Conv2d(ch, 1, kernel_size=4, stride=1, padding=0)

    def forward(
        self, images: torch.Tensor, code: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        if images.dim() != 4 or images.shape[2] != self.scale or images.shape[3] != self.scale:
            raise CompatibilityError(
                f"discriminator expects [B, 3, {self.scale}, {self.scale}], "
                f"got {tuple(images.shape)}"
            )
        feats = self.trunk(images)
        p_uncond = torch.sigmoid(self.uncond_head(feats)).flatten(1).squeeze(1)
        if code is None:
            return p_uncond, None
        if code.dim() != 2 or code.shape[1] != self.ca_dim:
            raise CompatibilityError(
                f"condition code must be [B, {self.ca_dim}], got {tuple(code.shape)}"
            )
        spatial = code[:, :, None, None].expand(-1, -1, feats.shape[2], feats.shape[3])
        fused = self.cond_join(torch.cat([feats, spatial], dim=1))
        p_cond = torch.sigmoid(self.cond_head(fused)).flatten(1).squeeze(1)
        return p_uncond, p_cond


def build_discriminators(
    scales: tuple[int, ...], base_channels: int, ca_dim: int
) -> nn.ModuleList:
    return nn.ModuleList(
        ScaleDiscriminator(scale, base_channels, ca_dim) for scale in scales
    )
