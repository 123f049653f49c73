"""Relation-supervised densely-stacked conditional generator."""

from .losses import discriminator_loss, generator_loss
from .networks import (
    AblationFlags,
    ConditioningAugmenter,
    ConditioningCode,
    DenselyStackedGenerator,
    ImagePyramid,
    ScaleDiscriminator,
    build_discriminators,
    gaussian_kl,
)
from .relation import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    LABEL_UNDESIRED,
    RelationClassifier,
    RelationSet,
    fake_relation_loss,
    real_relation_loss,
    relation_accuracy,
    relation_supervisor_loss,
)
from .train import (
    ConditionExtractor,
    RdgBundle,
    build_rdg_models,
    condition_extractor_for,
    load_rdg_bundle,
    synthesize,
    synthesize_for_entries,
    train_rdg,
)

__all__ = [
    "AblationFlags",
    "ConditionExtractor",
    "ConditioningAugmenter",
    "ConditioningCode",
    "DenselyStackedGenerator",
    "ImagePyramid",
    "LABEL_NEGATIVE",
    "LABEL_POSITIVE",
    "LABEL_UNDESIRED",
    "RdgBundle",
    "RelationClassifier",
    "RelationSet",
    "ScaleDiscriminator",
    "build_discriminators",
    "build_rdg_models",
    "condition_extractor_for",
    "discriminator_loss",
    "fake_relation_loss",
    "gaussian_kl",
    "generator_loss",
    "load_rdg_bundle",
    "real_relation_loss",
    "relation_accuracy",
    "relation_supervisor_loss",
    "synthesize",
    "synthesize_for_entries",
    "train_rdg",
]
