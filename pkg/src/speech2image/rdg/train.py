"""Stage-two training: the stacked conditional generator.

Each batch takes one discriminator step and one generator step.  The
discriminator step also trains the relation classifier on real-image pairs
(ground truth vs. same-class / mismatched / itself); the generator step
optimizes the adversarial terms at every scale plus the full relation
objective and the conditioning-code KL.  Speech-side encoders stay frozen
throughout; conditions are precomputed per record and cached.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..checkpointing import file_sha256, load_checkpoint, save_checkpoint
from ..config import ExperimentConfig
from ..dataset import PairedCorpus, batch_indices, pad_spectrograms, stack_images
from ..errors import CompatibilityError, TrainingDivergedError
from ..experiment import (
    HistoryWriter,
    capture_rng_state,
    restore_rng_state,
    seed_everything,
    truncate_history,
)
from ..imaging import save_grid
from ..sampling import sample_relation_indices
from .losses import discriminator_loss, generator_loss
from .networks import (
    AblationFlags,
    ConditioningAugmenter,
    ConditioningCode,
    DenselyStackedGenerator,
    ImagePyramid,
    build_discriminators,
)
from .relation import RelationClassifier, RelationSet, real_relation_loss

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ["step", "L_G", "L_D0", "L_D1", "L_D2", "L_RS", "kl", "d_saturation"]
MAX_HISTORY_SCALES = 3


class ConditionExtractor:
    """Per-record condition vectors, computed once and cached.

    Either the frozen speech-encoder embedding of the utterance, or (for
    the ablated variant) the spectrogram mean-pooled over time.
    """

    def __init__(self, embedder=None, num_mel: int = 40):
        self.embedder = embedder
        self.num_mel = num_mel
        if embedder is not None:
            embedder.eval()
            self.dim = embedder.embedding_dim
        else:
            self.dim = num_mel
        self._cache: dict[int, torch.Tensor] = {}

    @torch.no_grad()
    def features_for_spectrograms(self, specs, pad_value: float) -> torch.Tensor:
        """Condition vectors for ad-hoc spectrograms (no corpus cache)."""
        if self.embedder is None:
            return torch.stack(
                [torch.from_numpy(s.frames.mean(axis=0).copy()) for s in specs]
            )
        frames_np, lengths_np = pad_spectrograms(specs, pad_value)
        return self.embedder.encode_speech(
            torch.from_numpy(frames_np), torch.from_numpy(lengths_np)
        ).detach()

    @torch.no_grad()
    def features(self, corpus: PairedCorpus, indices: list[int]) -> torch.Tensor:
        missing = [i for i in indices if i not in self._cache]
        if missing:
            specs = [corpus.spectrogram(i) for i in missing]
            emb = self.features_for_spectrograms(specs, corpus.pad_value())
            for row, i in enumerate(missing):
                self._cache[i] = emb[row]
        return torch.stack([self._cache[i] for i in indices])


def condition_extractor_for(
    flags: AblationFlags,
    sen_checkpoint: str | Path | None,
    num_mel: int,
) -> tuple[ConditionExtractor, str | None]:
    """Build the extractor a flag set calls for; returns (extractor, SEN hash)."""
    if not flags.use_sen_embeddings:
        return ConditionExtractor(embedder=None, num_mel=num_mel), None
    if sen_checkpoint is None:
        raise CompatibilityError(
            "use_sen_embeddings is on but no speech-encoder checkpoint was given"
        )
    from ..sen.train import embedder_from_checkpoint

    embedder, _ = embedder_from_checkpoint(sen_checkpoint)
    return ConditionExtractor(embedder=embedder), file_sha256(sen_checkpoint)


@dataclass
class RdgModels:
    generator: DenselyStackedGenerator
    discriminators: nn.ModuleList
    relation: RelationClassifier | None
    ca: ConditioningAugmenter

    def generator_parameters(self):
        return list(self.generator.parameters()) + list(self.ca.parameters())

    def discriminator_parameters(self):
        params = list(self.discriminators.parameters())
        if self.relation is not None:
            params += list(self.relation.parameters())
        return params

    def train(self) -> None:
        for m in (self.generator, self.discriminators, self.ca):
            m.train()
        if self.relation is not None:
            self.relation.train()

    def eval(self) -> None:
        for m in (self.generator, self.discriminators, self.ca):
            m.eval()
        if self.relation is not None:
            self.relation.eval()


def build_rdg_models(
    cfg: ExperimentConfig, cond_dim: int, flags: AblationFlags
) -> RdgModels:
    scales = tuple(cfg.rdg.scales)
    generator = DenselyStackedGenerator(
        noise_dim=cfg.rdg.noise_dim,
        ca_dim=cfg.rdg.ca_dim,
        base_channels=cfg.rdg.gen_channels,
        scales=scales,
        dense_stacking=flags.dense_stacking,
    )
    discriminators = build_discriminators(scales, cfg.rdg.disc_channels, cfg.rdg.ca_dim)
    relation = None
    if flags.relation_supervisor:
        relation = RelationClassifier(
            image_size=max(scales),
            base_channels=cfg.rdg.rs_channels,
            relation_dim=cfg.rdg.relation_dim,
        )
    ca = ConditioningAugmenter(cond_dim, cfg.rdg.ca_dim)
    return RdgModels(
        generator=generator, discriminators=discriminators, relation=relation, ca=ca
    )


@dataclass
class RdgTrainResult:
    checkpoint_path: Path
    epoch1_checkpoint_path: Path
    history_path: Path
    steps: int
    final_loss_g: float
    final_loss_d: float


def _detached(cond: ConditioningCode) -> ConditioningCode:
    return ConditioningCode(
        mu=cond.mu.detach(), log_var=cond.log_var.detach(), code=cond.code.detach()
    )


def train_rdg(
    cfg: ExperimentConfig,
    corpus: PairedCorpus,
    out_dir: str | Path,
    flags: AblationFlags | None = None,
    sen_checkpoint: str | Path | None = None,
    corpus_fingerprint: str | None = None,
    resume: str | Path | None = None,
) -> RdgTrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = flags or AblationFlags(
        dense_stacking=cfg.rdg.dense_stacking,
        relation_supervisor=cfg.rdg.relation_supervisor,
        use_sen_embeddings=cfg.rdg.use_sen_embeddings,
    )
    scales = tuple(cfg.rdg.scales)
    for scale in scales:
        if scale not in corpus.scales:
            raise CompatibilityError(
                f"corpus pyramid lacks the {scale}px scale (has {corpus.scales})"
            )
    if len(scales) > MAX_HISTORY_SCALES:
        raise CompatibilityError(
            f"at most {MAX_HISTORY_SCALES} pyramid scales are supported, got {len(scales)}"
        )
    top_scale = max(scales)

    np_rng = seed_everything(cfg.seed)
    extractor, sen_fingerprint = condition_extractor_for(
        flags, sen_checkpoint, cfg.data.num_mel
    )
    models = build_rdg_models(cfg, extractor.dim, flags)
    opt_g = torch.optim.Adam(
        models.generator_parameters(),
        lr=cfg.rdg.learning_rate,
        betas=(cfg.rdg.adam_beta1, cfg.rdg.adam_beta2),
    )
    opt_d = torch.optim.Adam(
        models.discriminator_parameters(),
        lr=cfg.rdg.learning_rate,
        betas=(cfg.rdg.adam_beta1, cfg.rdg.adam_beta2),
    )

    checkpoint_path = out_dir / "rdg.pt"
    epoch1_path = out_dir / "rdg_epoch001.pt"
    history_path = out_dir / "rdg_history.csv"
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(exist_ok=True)

    start_epoch = 0
    step = 0
    if resume is not None:
        payload = load_checkpoint(resume, kind="rdg")
        saved_flags = AblationFlags.from_dict(payload["flags"])
        if saved_flags != flags:
            raise CompatibilityError(
                f"checkpoint flags {saved_flags.as_dict()} do not match requested "
                f"{flags.as_dict()}"
            )
        if payload["cond_dim"] != extractor.dim:
            raise CompatibilityError(
                f"condition dim mismatch: checkpoint expects {payload['cond_dim']}, "
                f"speech side provides {extractor.dim}"
            )
        if list(payload["scales"]) != list(scales):
            raise CompatibilityError(
                f"scale stack mismatch: checkpoint has {payload['scales']}, "
                f"config asks {list(scales)}"
            )
        models.generator.load_state_dict(payload["generator"])
        models.discriminators.load_state_dict(payload["discriminators"])
        if models.relation is not None:
            models.relation.load_state_dict(payload["relation"])
        models.ca.load_state_dict(payload["ca"])
        opt_g.load_state_dict(payload["opt_g"])
        opt_d.load_state_dict(payload["opt_d"])
        restore_rng_state(payload["rng"], np_rng)
        start_epoch = payload["epoch"]
        step = payload["step"]
        truncate_history(history_path, step)
        log.info("resuming stacked-generator training from epoch %d", start_epoch)

    def save(path: Path, epoch: int) -> None:
        save_checkpoint(
            path,
            "rdg",
            {
                "config": cfg.echo(),
                "flags": flags.as_dict(),
                "cond_dim": extractor.dim,
                "scales": list(scales),
                "generator": models.generator.state_dict(),
                "discriminators": models.discriminators.state_dict(),
                "relation": None
                if models.relation is None
                else models.relation.state_dict(),
                "ca": models.ca.state_dict(),
                "opt_g": opt_g.state_dict(),
                "opt_d": opt_d.state_dict(),
                "epoch": epoch,
                "step": step,
                "corpus_fingerprint": corpus_fingerprint,
                "sen_fingerprint": sen_fingerprint,
                "rng": capture_rng_state(np_rng),
            },
        )

    def write_grid(tag: int) -> None:
        count = min(16, len(corpus))
        feats = extractor.features(corpus, list(range(count)))
        models.eval()
        with torch.no_grad():
            g = torch.Generator().manual_seed(cfg.seed)
            z = torch.randn(count, cfg.rdg.noise_dim, generator=g)
            cond = models.ca(feats, mode="infer")
            pyramid = models.generator(z, cond.code)
        models.train()
        images = pyramid.images[top_scale].permute(0, 2, 3, 1).numpy()
        save_grid(sample_dir / f"samples_step{tag}.png", list(images), columns=4)

    final_g = float("nan")
    final_d = float("nan")
    drop_last = len(corpus) >= cfg.rdg.batch_size
    models.train()
    with HistoryWriter(history_path, HISTORY_COLUMNS, resume=resume is not None) as history:
        for epoch in range(start_epoch, cfg.rdg.epochs):
            for idx in batch_indices(
                len(corpus), cfg.rdg.batch_size, np_rng, drop_last=drop_last
            ):
                if idx.size < 2:
                    continue  # BatchNorm needs more than one item
                gt_indices = [int(i) for i in idx]
                same_idx, mis_idx = sample_relation_indices(
                    corpus.entries, gt_indices, np_rng
                )
                gt_samples = [corpus.sample(i, np_rng) for i in gt_indices]
                real_images = {
                    scale: torch.from_numpy(stack_images(gt_samples, scale))
                    for scale in scales
                }
                same_top = torch.from_numpy(
                    stack_images([corpus.sample(i) for i in same_idx], top_scale)
                )
                mis_top = torch.from_numpy(
                    stack_images([corpus.sample(i) for i in mis_idx], top_scale)
                )

                feats = extractor.features(corpus, gt_indices)
                cond = models.ca(feats, mode="train")
                z = torch.randn(len(gt_indices), cfg.rdg.noise_dim)
                pyramid = models.generator(z, cond.code)

                # one discriminator (+ relation classifier) step
                opt_d.zero_grad()
                cond_d = _detached(cond)
                d_total = torch.zeros(())
                d_values = [0.0] * MAX_HISTORY_SCALES
                d_sat = 0
                for i, scale in enumerate(scales):
                    loss_i, parts_i = discriminator_loss(
                        models.discriminators[i],
                        real_images[scale],
                        pyramid.images[scale].detach(),
                        cond_d,
                    )
                    d_values[i] = float(loss_i.item())
                    d_sat += parts_i.saturated
                    d_total = d_total + loss_i
                if models.relation is not None:
                    d_total = d_total + real_relation_loss(
                        models.relation, real_images[top_scale], same_top, mis_top
                    )
                if not torch.isfinite(d_total):
                    raise TrainingDivergedError(
                        f"discriminator loss non-finite at step {step}"
                    )
                d_total.backward()
                opt_d.step()

                # one generator (+ conditioning) step
                opt_g.zero_grad()
                rel_set = None
                if models.relation is not None:
                    rel_set = RelationSet(
                        fake=pyramid.images[top_scale],
                        ground_truth=real_images[top_scale],
                        same_class=same_top,
                        mismatched=mis_top,
                    )
                g_total, g_parts = generator_loss(
                    list(models.discriminators),
                    pyramid,
                    cond,
                    relation_model=models.relation,
                    rel_set=rel_set,
                    flags=flags,
                    kl_weight=cfg.rdg.kl_weight,
                )
                if not torch.isfinite(g_total):
                    raise TrainingDivergedError(
                        f"generator loss non-finite at step {step}"
                    )
                g_total.backward()
                opt_g.step()

                step += 1
                final_g = float(g_total.item())
                final_d = float(sum(d_values))
                history.write(
                    {
                        "step": step,
                        "L_G": final_g,
                        "L_D0": d_values[0],
                        "L_D1": d_values[1],
                        "L_D2": d_values[2],
                        "L_RS": g_parts.relation,
                        "kl": g_parts.kl,
                        "d_saturation": d_sat + g_parts.saturated,
                    }
                )

            done = epoch + 1
            if done == 1:
                save(epoch1_path, done)
            if done % cfg.rdg.checkpoint_every == 0 or done == cfg.rdg.epochs:
                save(checkpoint_path, done)
            if done % cfg.rdg.sample_every == 0 or done == cfg.rdg.epochs:
                write_grid(step)

    log.info("stacked-generator training done: %d steps", step)
    return RdgTrainResult(
        checkpoint_path=checkpoint_path,
        epoch1_checkpoint_path=epoch1_path,
        history_path=history_path,
        steps=step,
        final_loss_g=final_g,
        final_loss_d=final_d,
    )


@dataclass
class RdgBundle:
    """Inference-ready generator side of an RDG checkpoint."""

    cfg: ExperimentConfig
    flags: AblationFlags
    cond_dim: int
    scales: tuple[int, ...]
    generator: DenselyStackedGenerator
    ca: ConditioningAugmenter
    sen_fingerprint: str | None


def load_rdg_bundle(path: str | Path) -> RdgBundle:
    from ..config import config_from_echo

    payload = load_checkpoint(path, kind="rdg")
    cfg = config_from_echo(payload["config"])
    flags = AblationFlags.from_dict(payload["flags"])
    scales = tuple(payload["scales"])
    generator = DenselyStackedGenerator(
        noise_dim=cfg.rdg.noise_dim,
        ca_dim=cfg.rdg.ca_dim,
        base_channels=cfg.rdg.gen_channels,
        scales=scales,
        dense_stacking=flags.dense_stacking,
    )
    generator.load_state_dict(payload["generator"])
    generator.eval()
    ca = ConditioningAugmenter(payload["cond_dim"], cfg.rdg.ca_dim)
    ca.load_state_dict(payload["ca"])
    ca.eval()
    return RdgBundle(
        cfg=cfg,
        flags=flags,
        cond_dim=payload["cond_dim"],
        scales=scales,
        generator=generator,
        ca=ca,
        sen_fingerprint=payload.get("sen_fingerprint"),
    )


@torch.no_grad()
def synthesize(
    bundle: RdgBundle,
    features: torch.Tensor,
    seed: int = 0,
    mode: str = "infer",
) -> ImagePyramid:
    """Generate a pyramid for each condition row; seeded and reproducible."""
    if features.dim() != 2 or features.shape[1] != bundle.cond_dim:
        raise CompatibilityError(
            f"condition features must be [B, {bundle.cond_dim}], got {tuple(features.shape)}"
        )
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(features.shape[0], bundle.cfg.rdg.noise_dim, generator=g)
    cond = bundle.ca(features, mode=mode, generator=g)
    return bundle.generator(z, cond.code)


@torch.no_grad()
def synthesize_for_entries(
    bundle: RdgBundle,
    extractor: ConditionExtractor,
    corpus: PairedCorpus,
    indices: list[int],
    seed: int = 0,
    batch_size: int = 16,
) -> np.ndarray:
    """Top-scale fakes for the given corpus records as [N, H, W, 3] in [-1, 1].

    Each record's noise vector is derived from (seed, position) so the
    output is independent of batch partitioning.
    """
    top = max(bundle.scales)
    chunks = []
    for start in range(0, len(indices), batch_size):
        part = indices[start : start + batch_size]
        feats = extractor.features(corpus, part)
        z = torch.cat(
            [
                torch.randn(
                    1,
                    bundle.cfg.rdg.noise_dim,
                    generator=torch.Generator().manual_seed(seed + start + offset),
                )
                for offset in range(len(part))
            ]
        )
        cond = bundle.ca(feats, mode="infer")
        pyramid = bundle.generator(z, cond.code)
        chunks.append(pyramid.images[top].permute(0, 2, 3, 1).numpy())
    return np.concatenate(chunks, axis=0)
