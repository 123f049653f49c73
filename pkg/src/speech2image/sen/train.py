"""Stage-one training: fit the dual-encoder co-embedding.

Each step embeds a batch of paired utterances and images, applies the
matching + distinctive objective and takes one Adam step on everything that
is trainable.  Losses are logged per step to ``sen_history.csv``; a rolling
checkpoint is written every epoch so an interrupted run can resume.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..checkpointing import load_checkpoint, save_checkpoint
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
from .encoders import SpeechImageEmbedder
from .losses import EmbeddingBatch, sen_total_loss

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ["step", "L_m", "L_d", "L_SEN"]


def build_embedder(cfg: ExperimentConfig, num_classes: int) -> SpeechImageEmbedder:
    return SpeechImageEmbedder(
        num_classes=num_classes,
        num_mel=cfg.data.num_mel,
        embedding_dim=cfg.sen.embedding_dim,
        conv_channels=cfg.sen.conv_channels,
        gru_hidden=cfg.sen.gru_hidden,
        attention_dim=cfg.sen.attention_dim,
        backbone=cfg.sen.backbone,
        backbone_channels=cfg.sen.backbone_channels,
        image_size=cfg.sen.image_size,
        freeze_backbone=cfg.sen.freeze_backbone,
    )


def embedder_from_checkpoint(path: str | Path) -> tuple[SpeechImageEmbedder, dict]:
    """Rebuild a trained embedder from its checkpoint payload."""
    from ..config import config_from_echo

    payload = load_checkpoint(path, kind="sen")
    cfg = config_from_echo(payload["config"])
    model = build_embedder(cfg, payload["num_classes"])
    model.load_state_dict(payload["model"])
    model.eval()
    return model, payload


@dataclass
class SenTrainResult:
    checkpoint_path: Path
    history_path: Path
    initial_loss: float
    final_loss: float
    steps: int


def _embed_batch(
    model: SpeechImageEmbedder,
    corpus: PairedCorpus,
    indices: np.ndarray,
    image_scale: int,
    rng: np.random.Generator,
):
    samples = [corpus.sample(int(i), rng) for i in indices]
    frames_np, lengths_np = pad_spectrograms(
        [s.spectrogram for s in samples], corpus.pad_value()
    )
    frames = torch.from_numpy(frames_np)
    lengths = torch.from_numpy(lengths_np)
    images = torch.from_numpy(stack_images(samples, image_scale))
    class_ids = torch.tensor([s.class_id for s in samples], dtype=torch.long)
    speech_emb = model.encode_speech(frames, lengths)
    image_emb = model.encode_image(images)
    return speech_emb, image_emb, class_ids


def train_sen(
    cfg: ExperimentConfig,
    corpus: PairedCorpus,
    out_dir: str | Path,
    corpus_fingerprint: str | None = None,
    resume: str | Path | None = None,
) -> SenTrainResult:
    """Train the co-embedding on a paired corpus.

    Raises TrainingDivergedError if the loss goes non-finite; the last
    epoch's checkpoint stays on disk for post-mortem inspection.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.sen.image_size not in corpus.scales:
        raise CompatibilityError(
            f"corpus pyramid lacks the {cfg.sen.image_size}px scale "
            f"(has {corpus.scales})"
        )
    num_classes = int(corpus.class_ids.max()) + 1 if len(corpus) else 0
    if num_classes < 2:
        raise CompatibilityError("co-embedding training needs at least 2 classes")

    np_rng = seed_everything(cfg.seed)
    model = build_embedder(cfg, num_classes)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=cfg.sen.learning_rate)

    checkpoint_path = out_dir / "sen.pt"
    history_path = out_dir / "sen_history.csv"
    start_epoch = 0
    step = 0
    initial_loss = None
    if resume is not None:
        payload = load_checkpoint(resume, kind="sen")
        if payload["num_classes"] != num_classes:
            raise CompatibilityError(
                f"resume checkpoint trained on {payload['num_classes']} classes, "
                f"corpus has {num_classes}"
            )
        model.load_state_dict(payload["model"])
        optimizer.load_state_dict(payload["optimizer"])
        restore_rng_state(payload["rng"], np_rng)
        start_epoch = payload["epoch"]
        step = payload["step"]
        initial_loss = payload.get("initial_loss")
        truncate_history(history_path, step)
        log.info("resuming co-embedding training from epoch %d", start_epoch)

    def save(epoch: int) -> None:
        save_checkpoint(
            checkpoint_path,
            "sen",
            {
                "config": cfg.echo(),
                "num_classes": num_classes,
                "model": model.state_dict(),
                "optimizer": optimizer.state_dict(),
                "epoch": epoch,
                "step": step,
                "initial_loss": initial_loss,
                "corpus_fingerprint": corpus_fingerprint,
                "rng": capture_rng_state(np_rng),
            },
        )

    drop_last = len(corpus) >= cfg.sen.batch_size
    final_loss = float("nan")
    with HistoryWriter(history_path, HISTORY_COLUMNS, resume=resume is not None) as history:
        for epoch in range(start_epoch, cfg.sen.epochs):
            model.train()
            for batch_idx in batch_indices(
                len(corpus), cfg.sen.batch_size, np_rng, drop_last=drop_last
            ):
                speech_emb, image_emb, class_ids = _embed_batch(
                    model, corpus, batch_idx, cfg.sen.image_size, np_rng
                )
                speech_logits, image_logits = model.class_logits(speech_emb, image_emb)
                batch = EmbeddingBatch.from_parts(image_emb, speech_emb, class_ids)
                total, l_match, l_dist = sen_total_loss(
                    batch, speech_logits, image_logits, smoothing=cfg.sen.smoothing
                )
                if not torch.isfinite(total):
                    raise TrainingDivergedError(
                        f"co-embedding loss non-finite at step {step} "
                        f"(matching={l_match.item()}, distinctive={l_dist.item()})"
                    )
                optimizer.zero_grad()
                total.backward()
                optimizer.step()

                step += 1
                final_loss = float(total.item())
                if initial_loss is None:
                    initial_loss = final_loss
                history.write(
                    {
                        "step": step,
                        "L_m": float(l_match.item()),
                        "L_d": float(l_dist.item()),
                        "L_SEN": final_loss,
                    }
                )
            save(epoch + 1)
    log.info(
        "co-embedding training done: %d steps, loss %.4f -> %.4f",
        step,
        initial_loss if initial_loss is not None else float("nan"),
        final_loss,
    )
    return SenTrainResult(
        checkpoint_path=checkpoint_path,
        history_path=history_path,
        initial_loss=float(initial_loss) if initial_loss is not None else float("nan"),
        final_loss=final_loss,
        steps=step,
    )


@torch.no_grad()
def embed_corpus(
    model: SpeechImageEmbedder,
    corpus: PairedCorpus,
    image_scale: int,
    batch_size: int = 32,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Embed every record without augmentation; returns (speech, image, classes)."""
    model.eval()
    speech_parts, image_parts, class_parts = [], [], []
    for start in range(0, len(corpus), batch_size):
        indices = np.arange(start, min(start + batch_size, len(corpus)))
        samples = [corpus.sample(int(i)) for i in indices]
        frames_np, lengths_np = pad_spectrograms(
            [s.spectrogram for s in samples], corpus.pad_value()
        )
        speech_parts.append(
            model.encode_speech(torch.from_numpy(frames_np), torch.from_numpy(lengths_np))
        )
        image_parts.append(
            model.encode_image(torch.from_numpy(stack_images(samples, image_scale)))
        )
        class_parts.append(torch.tensor([s.class_id for s in samples], dtype=torch.long))
    return (
        torch.cat(speech_parts),
        torch.cat(image_parts),
        torch.cat(class_parts),
    )


@torch.no_grad()
def recall_at_1(
    speech_emb: torch.Tensor, image_emb: torch.Tensor, class_ids: torch.Tensor
) -> float:
    """Speech→image retrieval: top-1 cosine neighbour shares the query's class."""
    speech = torch.nn.functional.normalize(speech_emb, dim=1)
    image = torch.nn.functional.normalize(image_emb, dim=1)
    top1 = (speech @ image.t()).argmax(dim=1)
    hits = class_ids[top1] == class_ids
    return float(hits.float().mean().item())
