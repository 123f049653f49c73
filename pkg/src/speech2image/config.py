"""Experiment configuration: flat key-value files with sections.

A config is an INI-style text file whose keys are all known in advance;
unknown sections or keys are rejected so experiment configs stay
diff-friendly and typo-proof.  Profiles ("full", "ci") are predefined
overlays applied before the user's file; explicit ``--set`` overrides win
over everything.  The fully resolved config is echoed verbatim into every
artifact a run produces.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# schema: section -> key -> (python type, default)
# bool values are written as true/false, int lists as comma-separated text.
_SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "global": {
        "seed": (int, 7),
    },
    "data": {
        "sample_rate_hz": (int, 16000),
        "frame_length_ms": (float, 25.0),
        "frame_shift_ms": (float, 10.0),
        "num_mel": (int, 40),
        "log_floor": (float, 1e-10),
        "normalize_spectrogram": (bool, False),
        "augment": (bool, True),
        "augment_resize_px": (int, 304),
        "image_px": (int, 256),
    },
    "sen": {
        "embedding_dim": (int, 1024),
        "smoothing": (float, 10.0),
        "conv_channels": (int, 128),
        "gru_hidden": (int, 256),
        "attention_dim": (int, 128),
        "backbone": (str, "desk"),
        "backbone_channels": (int, 32),
        "freeze_backbone": (bool, True),
        "image_size": (int, 256),
        "learning_rate": (float, 2e-4),
        "batch_size": (int, 32),
        "epochs": (int, 120),
    },
    "rdg": {
        "noise_dim": (int, 100),
        "ca_dim": (int, 128),
        "gen_channels": (int, 64),
        "disc_channels": (int, 64),
        "rs_channels": (int, 32),
        "relation_dim": (int, 128),
        "kl_weight": (float, 1.0),
        "scales": (list, [64, 128, 256]),
        "dense_stacking": (bool, True),
        "relation_supervisor": (bool, True),
        "use_sen_embeddings": (bool, True),
        "learning_rate": (float, 2e-4),
        "adam_beta1": (float, 0.5),
        "adam_beta2": (float, 0.999),
        "batch_size": (int, 32),
        "epochs": (int, 600),
        "sample_every": (int, 50),
        "checkpoint_every": (int, 50),
    },
    "eval": {
        "backbone": (str, "desk"),
        "backbone_channels": (int, 16),
        "backbone_epochs": (int, 30),
        "feature_dim": (int, 64),
        "is_splits": (int, 10),
        "queries_per_class": (int, 2),
        "fakes_per_caption": (int, 1),
    },
}

# Desk-scale profile: small enough that the full two-stage pipeline trains
# in CI minutes on a single core.
_PROFILES: dict[str, dict[str, dict[str, object]]] = {
    "full": {},
    "ci": {
        "data": {"augment": False},
        "sen": {
            "embedding_dim": 128,
            "conv_channels": 64,
            "gru_hidden": 32,
            "attention_dim": 32,
            "backbone_channels": 12,
            "freeze_backbone": False,
            "image_size": 64,
            "batch_size": 16,
            "epochs": 60,
        },
        "rdg": {
            "noise_dim": 32,
            "ca_dim": 32,
            "gen_channels": 16,
            "disc_channels": 16,
            "rs_channels": 8,
            "relation_dim": 128,
            "scales": [64],
            "batch_size": 16,
            "epochs": 50,
            "sample_every": 25,
            "checkpoint_every": 25,
            # at desk scale the full-size KL weight collapses the CA
            # posterior and the generator goes unconditional
            "kl_weight": 0.1,
        },
        # feature_dim well under the per-split sample count keeps the
        # FID covariance estimate stable on tiny corpora
        "eval": {"backbone_epochs": 25, "feature_dim": 16},
    },
}


@dataclass
class DataConfig:
    sample_rate_hz: int = 16000
    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    num_mel: int = 40
    log_floor: float = 1e-10
    normalize_spectrogram: bool = False
    augment: bool = True
    augment_resize_px: int = 304
    image_px: int = 256


@dataclass
class SenConfig:
    embedding_dim: int = 1024
    smoothing: float = 10.0
    conv_channels: int = 128
    gru_hidden: int = 256
    attention_dim: int = 128
    backbone: str = "desk"
    backbone_channels: int = 32
    freeze_backbone: bool = True
    image_size: int = 256
    learning_rate: float = 2e-4
    batch_size: int = 32
    epochs: int = 120


@dataclass
class RdgConfig:
    noise_dim: int = 100
    ca_dim: int = 128
    gen_channels: int = 64
    disc_channels: int = 64
    rs_channels: int = 32
    relation_dim: int = 128
    kl_weight: float = 1.0
    scales: list[int] = field(default_factory=lambda: [64, 128, 256])
    dense_stacking: bool = True
    relation_supervisor: bool = True
    use_sen_embeddings: bool = True
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 32
    epochs: int = 600
    sample_every: int = 50
    checkpoint_every: int = 50


@dataclass
class EvalConfig:
    backbone: str = "desk"
    backbone_channels: int = 16
    backbone_epochs: int = 30
    feature_dim: int = 64
    is_splits: int = 10
    queries_per_class: int = 2
    fakes_per_caption: int = 1


@dataclass
class ExperimentConfig:
    seed: int = 7
    data: DataConfig = field(default_factory=DataConfig)
    sen: SenConfig = field(default_factory=SenConfig)
    rdg: RdgConfig = field(default_factory=RdgConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def echo(self) -> dict[str, str]:
        """Flat ``section.key -> text`` mapping of every resolved value."""
        out: dict[str, str] = {"global.seed": str(self.seed)}
        for section, obj in (
            ("data", self.data),
            ("sen", self.sen),
            ("rdg", self.rdg),
            ("eval", self.eval),
        ):
            for f in dataclasses.fields(obj):
                out[f"{section}.{f.name}"] = _format_value(getattr(obj, f.name))
        return out

    def to_ini(self) -> str:
        """Render the resolved config as loadable INI text."""
        lines: list[str] = []
        grouped: dict[str, list[tuple[str, str]]] = {}
        for flat, value in self.echo().items():
            section, key = flat.split(".", 1)
            grouped.setdefault(section, []).append((key, value))
        for section in ("global", "data", "sen", "rdg", "eval"):
            lines.append(f"[{section}]")
            for key, value in grouped.get(section, []):
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(section: str, key: str, text: str) -> object:
    try:
        typ, _ = _SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown config key [{section}] {key}") from None
    text = text.strip()
    try:
        if typ is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typ is list:
            return [int(part) for part in text.split(",") if part.strip()]
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}") from None


def _apply(settings: dict[str, dict[str, object]], cfg: ExperimentConfig) -> None:
    for section, keys in settings.items():
        if section == "global":
            for key, value in keys.items():
                if key != "seed":
                    raise ConfigError(f"unknown config key [global] {key}")
                cfg.seed = int(value)  # type: ignore[arg-type]
            continue
        target = getattr(cfg, section, None)
        if target is None or section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in keys.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")
            setattr(target, key, value)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.data.num_mel < 1:
        raise ConfigError("data.num_mel must be >= 1")
    if cfg.data.sample_rate_hz <= 0:
        raise ConfigError("data.sample_rate_hz must be positive")
    if cfg.data.log_floor <= 0:
        raise ConfigError("data.log_floor must be positive")
    if cfg.sen.smoothing <= 0:
        raise ConfigError("sen.smoothing must be positive")
    if cfg.sen.embedding_dim < 1:
        raise ConfigError("sen.embedding_dim must be >= 1")
    if cfg.sen.image_size < 32:
        raise ConfigError("sen.image_size must be >= 32")
    if not cfg.rdg.scales:
        raise ConfigError("rdg.scales must list at least one resolution")
    if sorted(cfg.rdg.scales) != cfg.rdg.scales:
        raise ConfigError("rdg.scales must be ascending")
    for scale in cfg.rdg.scales:
        if scale < 8 or scale & (scale - 1):
            raise ConfigError(f"rdg.scales entries must be powers of two >= 8, got {scale}")
    if cfg.rdg.relation_dim % 2:
        raise ConfigError("rdg.relation_dim must be even (difference ++ product halves)")
    if cfg.eval.queries_per_class < 1:
        raise ConfigError("eval.queries_per_class must be >= 1")


def load_config(
    path: str | Path | None = None,
    profile: str = "full",
    overrides: dict[str, str] | None = None,
) -> ExperimentConfig:
    """Resolve a config from defaults, a profile, an optional file and overrides.

    ``overrides`` maps flat ``section.key`` names to raw text values, as
    supplied by the CLI's ``--set`` flag.
    """
    if profile not in _PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(_PROFILES)}")
    cfg = ExperimentConfig()
    _apply(_PROFILES[profile], cfg)

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case-sensitive
        text = Path(path).read_text(encoding="utf-8")
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        file_settings: dict[str, dict[str, object]] = {}
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}] in {path}")
            for key, raw in parser.items(section):
                file_settings.setdefault(section, {})[key] = _parse_value(section, key, raw)
        _apply(file_settings, cfg)

    for flat, raw in (overrides or {}).items():
        if "." not in flat:
            raise ConfigError(f"override {flat!r} must look like section.key=value")
        section, key = flat.split(".", 1)
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        _apply({section: {key: _parse_value(section, key, raw)}}, cfg)

    _validate(cfg)
    return cfg


def config_from_echo(echo: dict[str, str]) -> ExperimentConfig:
    """Rebuild a config from the flat echo stored in an artifact."""
    cfg = ExperimentConfig()
    settings: dict[str, dict[str, object]] = {}
    for flat, raw in echo.items():
        section, key = flat.split(".", 1)
        if section == "global":
            cfg.seed = int(raw)
            continue
        settings.setdefault(section, {})[key] = _parse_value(section, key, raw)
    _apply(settings, cfg)
    _validate(cfg)
    return cfg


def parse_config_text(text: str, profile: str = "full") -> ExperimentConfig:
    """Convenience for tests: resolve a config from literal INI text."""
    buf = io.StringIO(text)
    tmp = configparser.ConfigParser(interpolation=None)
    tmp.optionxform = str
    tmp.read_file(buf)
    settings: dict[str, dict[str, object]] = {}
    for section in tmp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in tmp.items(section):
            settings.setdefault(section, {})[key] = _parse_value(section, key, raw)
    cfg = ExperimentConfig()
    _apply(_PROFILES[profile], cfg)
    _apply(settings, cfg)
    _validate(cfg)
    return cfg
