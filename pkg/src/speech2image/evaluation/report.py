"""Metric reports: a validated JSON artifact stamping every number with the
backbone and protocol that produced it."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

REPORT_FORMAT_VERSION = 1

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "format_version",
        "is_mean",
        "is_std",
        "fid",
        "map",
        "backbone",
        "protocol",
        "config",
    ],
    "properties": {
        "format_version": {"const": REPORT_FORMAT_VERSION},
        "is_mean": {"type": "number", "minimum": 1.0},
        "is_std": {"type": "number", "minimum": 0.0},
        "fid": {"type": "number", "minimum": 0.0},
        "map": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "backbone": {
            "type": "object",
            "required": ["name", "provenance", "feature_dim", "num_classes"],
            "properties": {
                "name": {"type": "string"},
                "provenance": {
                    "enum": ["desk-scale-trained", "pretrained-large"]
                },
                "feature_dim": {"type": "integer", "minimum": 1},
                "num_classes": {"type": "integer", "minimum": 2},
            },
        },
        "protocol": {
            "type": "object",
            "required": ["is_splits", "queries_per_class", "seed"],
            "properties": {
                "is_splits": {"type": "integer", "minimum": 1},
                "queries_per_class": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "config": {"type": "object"},
        "flags": {"type": "object"},
    },
    "additionalProperties": False,
}

# IS of one sample per split degenerates to 1.0; tiny negative FID values
# are eigensolver noise on identical sets and are clamped at zero.
_FID_NOISE_FLOOR = -1e-6


@dataclass
class MetricReport:
    is_mean: float
    is_std: float
    fid: float
    map: float
    backbone: dict
    protocol: dict
    config: dict = field(default_factory=dict)
    flags: dict | None = None
    format_version: int = REPORT_FORMAT_VERSION

    def __post_init__(self):
        if self.fid < 0:
            if self.fid < _FID_NOISE_FLOOR:
                raise ValueError(f"fid is negative beyond numerical noise: {self.fid}")
            self.fid = 0.0

    def to_dict(self) -> dict:
        data = asdict(self)
        if data["flags"] is None:
            del data["flags"]
        return data

    def to_json(self) -> str:
        data = self.to_dict()
        validate_report(data)
        return json.dumps(data, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        data = json.loads(text)
        validate_report(data)
        return cls(
            is_mean=data["is_mean"],
            is_std=data["is_std"],
            fid=data["fid"],
            map=data["map"],
            backbone=data["backbone"],
            protocol=data["protocol"],
            config=data["config"],
            flags=data.get("flags"),
            format_version=data["format_version"],
        )

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_json(Path(path).read_text())


def validate_report(data: dict) -> None:
    jsonschema.validate(instance=data, schema=REPORT_SCHEMA)
