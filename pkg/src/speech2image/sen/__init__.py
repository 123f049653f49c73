"""Speech embedding network: dual encoders into a shared space."""

from .encoders import (
    DeskImageBackbone,
    ImageEncoder,
    SpeechEncoder,
    SpeechImageEmbedder,
    build_backbone,
)
from .losses import (
    EmbeddingBatch,
    class_mask,
    distinctive_loss,
    matching_loss,
    sen_total_loss,
    similarity_matrix,
)
from .train import (
    build_embedder,
    embed_corpus,
    embedder_from_checkpoint,
    recall_at_1,
    train_sen,
)

__all__ = [
    "DeskImageBackbone",
    "EmbeddingBatch",
    "ImageEncoder",
    "SpeechEncoder",
    "SpeechImageEmbedder",
    "build_backbone",
    "build_embedder",
    "class_mask",
    "distinctive_loss",
    "embed_corpus",
    "embedder_from_checkpoint",
    "matching_loss",
    "recall_at_1",
    "sen_total_loss",
    "similarity_matrix",
    "train_sen",
]
