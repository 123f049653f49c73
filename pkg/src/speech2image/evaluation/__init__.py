"""Quantitative evaluation: IS, FID and retrieval mAP over a backbone."""

from .backbone import (
    DeskBackbone,
    InceptionBackbone,
    load_backbone,
    load_feature_cache,
    save_backbone,
    save_feature_cache,
    train_eval_backbone,
)
from .metrics import (
    average_precision,
    fid,
    inception_score,
    inception_score_from_probs,
    retrieval_map,
    retrieval_map_from_features,
)
from .report import REPORT_SCHEMA, MetricReport, validate_report

__all__ = [
    "DeskBackbone",
    "InceptionBackbone",
    "MetricReport",
    "REPORT_SCHEMA",
    "average_precision",
    "fid",
    "inception_score",
    "inception_score_from_probs",
    "load_backbone",
    "load_feature_cache",
    "retrieval_map",
    "retrieval_map_from_features",
    "save_backbone",
    "save_feature_cache",
    "train_eval_backbone",
    "validate_report",
]
