"""Command-line entry points.

Subcommands cover the whole pipeline: synthetic corpus creation, the two
training stages, generation, and metric evaluation.  Exit codes: 0 on
success, 2 for configuration/validation problems, 3 for incompatible
checkpoints or dimensions, 4 for evaluation-protocol violations.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .audio import compute_log_mel, read_wav
from .checkpointing import load_checkpoint
from .config import ExperimentConfig, load_config
from .dataset import PairedCorpus, augment_from_config, frontend_from_config
from .errors import (
    AudioError,
    CompatibilityError,
    ConfigError,
    ManifestError,
    ProtocolError,
    TrainingDivergedError,
)
from .experiment import ExperimentDir
from .imaging import load_image, save_image
from .manifest import corpus_fingerprint, load_manifest, num_classes_of, split_entries
from .synthetic import make_synthetic_corpus

log = logging.getLogger("speech2image")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPAT = 3
EXIT_PROTOCOL = 4


def _data_root() -> Path:
    return Path(os.environ.get("SPEECH2IMAGE_DATA_ROOT", "."))

def _exp_root() -> Path:
    return Path(os.environ.get("SPEECH2IMAGE_EXP_ROOT", "experiments"))


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    return load_config(args.config, profile=args.profile, overrides=overrides)


def _resume_paths(resume: str, default_name: str) -> tuple[Path, Path]:
    """Accept an experiment dir or a checkpoint file; return (dir, ckpt)."""
    path = Path(resume)
    if path.is_dir():
        return path, path / default_name
    return path.parent, path


def cmd_make_dataset(args: argparse.Namespace) -> int:
    out_dir = _resolve(_data_root(), args.out)
    manifest = make_synthetic_corpus(
        seed=args.seed,
        num_classes=args.classes,
        images_per_class=args.per_class,
        out_dir=out_dir,
    )
    print(f"manifest: {manifest}")
    print(f"corpus hash: {corpus_fingerprint(manifest)}")
    return EXIT_OK


def cmd_train_sen(args: argparse.Namespace) -> int:
    from .sen import embed_corpus, embedder_from_checkpoint, recall_at_1, train_sen

    cfg = _config_from_args(args)
    entries = load_manifest(args.manifest)
    train_entries = split_entries(entries, "train")
    corpus = PairedCorpus(
        train_entries,
        frontend_from_config(cfg.data),
        augment_from_config(cfg.data),
        scales=(cfg.sen.image_size,),
    )
    resume_ckpt = None
    if args.resume:
        exp_path, resume_ckpt = _resume_paths(args.resume, "sen.pt")
        exp = ExperimentDir.open_existing(exp_path)
    else:
        exp = ExperimentDir.allocate(_resolve(_exp_root(), args.out), args.name)
    exp.write_config_echo(cfg.echo())
    result = train_sen(
        cfg,
        corpus,
        exp.root,
        corpus_fingerprint=corpus_fingerprint(args.manifest),
        resume=resume_ckpt,
    )
    print(f"experiment: {exp.root}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"history: {result.history_path}")
    print(f"loss: {result.initial_loss:.4f} -> {result.final_loss:.4f} over {result.steps} steps")

    test_entries = split_entries(entries, "test")
    if test_entries:
        model, _ = embedder_from_checkpoint(result.checkpoint_path)
        test_corpus = PairedCorpus(
            test_entries,
            frontend_from_config(cfg.data),
            None,
            scales=(cfg.sen.image_size,),
        )
        speech, image, ids = embed_corpus(model, test_corpus, cfg.sen.image_size)
        r1 = recall_at_1(speech, image, ids)
        chance = 1.0 / num_classes_of(entries)
        print(f"held-out speech->image recall@1: {r1:.3f} (chance {chance:.3f})")
    return EXIT_OK


def cmd_train_rdg(args: argparse.Namespace) -> int:
    from .rdg import AblationFlags, train_rdg

    cfg = _config_from_args(args)
    ablate = set(args.ablate or [])
    flags = AblationFlags(
        dense_stacking=cfg.rdg.dense_stacking and "no-dense" not in ablate,
        relation_supervisor=cfg.rdg.relation_supervisor and "no-rs" not in ablate,
        use_sen_embeddings=cfg.rdg.use_sen_embeddings and "no-sen" not in ablate,
    )
    entries = load_manifest(args.manifest)
    train_entries = split_entries(entries, "train")
    corpus = PairedCorpus(
        train_entries,
        frontend_from_config(cfg.data),
        augment_from_config(cfg.data),
        scales=tuple(cfg.rdg.scales),
    )
    resume_ckpt = None
    if args.resume:
        exp_path, resume_ckpt = _resume_paths(args.resume, "rdg.pt")
        exp = ExperimentDir.open_existing(exp_path)
    else:
        exp = ExperimentDir.allocate(_resolve(_exp_root(), args.out), args.name)
    exp.write_config_echo(cfg.echo())
    result = train_rdg(
        cfg,
        corpus,
        exp.root,
        flags=flags,
        sen_checkpoint=args.sen,
        corpus_fingerprint=corpus_fingerprint(args.manifest),
        resume=resume_ckpt,
    )
    print(f"experiment: {exp.root}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"history: {result.history_path}")
    print(f"flags: {flags.as_dict()}")
    print(f"final losses: G {result.final_loss_g:.4f}, D {result.final_loss_d:.4f}")
    return EXIT_OK


def _write_pyramid(images: dict, row: int, stem: Path, all_scales: bool) -> None:
    top = max(images)
    if all_scales:
        for scale, batch in images.items():
            arr = batch[row].permute(1, 2, 0).numpy()
            save_image(stem.with_name(f"{stem.name}_{scale}px.png"), arr)
    else:
        arr = images[top][row].permute(1, 2, 0).numpy()
        save_image(stem.with_name(f"{stem.name}.png"), arr)


def cmd_generate(args: argparse.Namespace) -> int:
    from .rdg import condition_extractor_for, load_rdg_bundle, synthesize

    if not args.manifest and not args.audio:
        raise ConfigError("generate needs --manifest or at least one --audio file")
    bundle = load_rdg_bundle(args.checkpoint)
    extractor, sen_hash = condition_extractor_for(
        bundle.flags, args.sen, bundle.cfg.data.num_mel
    )
    if extractor.dim != bundle.cond_dim:
        raise CompatibilityError(
            f"condition dimensions differ: generator checkpoint expects "
            f"{bundle.cond_dim}, speech side provides {extractor.dim}"
        )
    if bundle.sen_fingerprint and sen_hash and sen_hash != bundle.sen_fingerprint:
        log.warning(
            "speech checkpoint hash differs from the one this generator "
            "was trained against"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    frontend = frontend_from_config(bundle.cfg.data)

    if args.manifest:
        entries = load_manifest(args.manifest)
        if args.split != "all":
            entries = split_entries(entries, args.split)
        if not entries:
            raise ConfigError(f"no {args.split} records in {args.manifest}")
        corpus = PairedCorpus(entries, frontend, None, scales=bundle.scales)
        written = 0
        for k in range(args.per_caption):
            for start in range(0, len(entries), 16):
                indices = list(range(start, min(start + 16, len(entries))))
                feats = extractor.features(corpus, indices)
                pyramid = synthesize(
                    bundle, feats, seed=args.seed + 7919 * k + start
                )
                for row, i in enumerate(indices):
                    class_dir = out_dir / f"class_{entries[i].class_id:03d}"
                    class_dir.mkdir(exist_ok=True)
                    stem = class_dir / f"fake_{i:04d}_{k}"
                    _write_pyramid(pyramid.images, row, stem, args.all_scales)
                    written += 1
        print(f"wrote {written} generated images to {out_dir}")
        return EXIT_OK

    failures = 0
    for audio_path in args.audio:
        try:
            waveform, rate = read_wav(audio_path)
            spec = compute_log_mel(waveform, rate, frontend)
        except (AudioError, OSError) as exc:
            log.error("skipping %s: %s", audio_path, exc)
            failures += 1
            continue
        feats = extractor.features_for_spectrograms(
            [spec], float(np.log(frontend.log_floor))
        )
        pyramid = synthesize(bundle, feats, seed=args.seed)
        stem = out_dir / Path(audio_path).stem
        _write_pyramid(pyramid.images, 0, stem, args.all_scales)
    if failures and failures == len(args.audio):
        raise AudioError(f"all {failures} audio inputs were unreadable")
    print(f"wrote images for {len(args.audio) - failures} utterances to {out_dir}")
    return EXIT_OK


def _scan_image_dir(root: Path, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Read a class_XXX/-structured directory into (images, class_ids)."""
    images, ids = [], []
    class_dirs = sorted(d for d in root.glob("class_*") if d.is_dir())
    if not class_dirs:
        raise ConfigError(f"{root}: no class_* subdirectories found")
    for class_dir in class_dirs:
        cid = int(class_dir.name.split("_")[-1])
        files = sorted(
            p for p in class_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        for p in files:
            images.append(load_image(p, size=size))
            ids.append(cid)
    if not images:
        raise ConfigError(f"{root}: class directories contain no images")
    return np.stack(images), np.array(ids, dtype=np.int64)


def _load_real_side(spec_path: str, split: str, size: int):
    """Real inputs: a manifest file, a class-dir tree, or a feature cache."""
    from .evaluation import load_feature_cache

    path = Path(spec_path)
    if path.is_file() and path.suffix == ".npz":
        features, ids = load_feature_cache(path)
        return None, features, ids
    if path.is_file():
        entries = load_manifest(path)
        if split != "all":
            entries = split_entries(entries, split)
        if not entries:
            raise ConfigError(f"no {split} records in {path}")
        images = np.stack([load_image(e.image_path, size=size) for e in entries])
        ids = np.array([e.class_id for e in entries], dtype=np.int64)
        return images, None, ids
    if path.is_dir():
        images, ids = _scan_image_dir(path, size)
        return images, None, ids
    raise ConfigError(f"real input not found: {path}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .evaluation import (
        MetricReport,
        fid,
        inception_score_from_probs,
        load_backbone,
        retrieval_map_from_features,
        save_backbone,
        train_eval_backbone,
    )

    cfg = _config_from_args(args)

    if args.backbone:
        backbone = load_backbone(args.backbone)
    else:
        real_path = Path(args.real)
        if not (real_path.is_file() and real_path.suffix != ".npz"):
            raise ConfigError(
                "--backbone not given: training one needs --real to be a manifest file"
            )
        entries = split_entries(load_manifest(real_path), "train")
        train_corpus = PairedCorpus(
            entries, frontend_from_config(cfg.data), None, scales=(64,)
        )
        backbone, accuracy = train_eval_backbone(
            train_corpus,
            num_classes=num_classes_of(entries),
            base_channels=cfg.eval.backbone_channels,
            feature_dim=cfg.eval.feature_dim,
            epochs=cfg.eval.backbone_epochs,
            seed=cfg.seed,
        )
        saved = save_backbone(Path(args.out).parent / "eval_backbone.pt", backbone, accuracy)
        log.info("trained desk backbone (accuracy %.3f) -> %s", accuracy, saved)

    size = backbone.input_size
    real_images, real_features, real_ids = _load_real_side(args.real, args.split, size)
    if real_features is None:
        real_features = backbone.features(real_images)

    fake_path = Path(args.fake)
    if fake_path.suffix == ".npz":
        raise ConfigError(
            "fake inputs must be images (class posteriors are needed for the "
            "inception score); feature caches are accepted for --real only"
        )
    fake_images, fake_ids = _scan_image_dir(fake_path, size)
    fake_features = backbone.features(fake_images)

    is_mean, is_std = inception_score_from_probs(
        backbone.class_probabilities(fake_images), splits=cfg.eval.is_splits
    )
    fid_value = fid(real_features, fake_features)
    map_value = retrieval_map_from_features(
        real_features,
        real_ids,
        fake_features,
        fake_ids,
        queries_per_class=cfg.eval.queries_per_class,
        seed=cfg.seed,
    )

    flags = None
    if args.rdg_checkpoint:
        flags = load_checkpoint(args.rdg_checkpoint, kind="rdg")["flags"]
    report = MetricReport(
        is_mean=is_mean,
        is_std=is_std,
        fid=fid_value,
        map=map_value,
        backbone={
            "name": type(backbone).__name__,
            "provenance": backbone.provenance,
            "feature_dim": backbone.feature_dim,
            "num_classes": backbone.num_classes,
        },
        protocol={
            "is_splits": cfg.eval.is_splits,
            "queries_per_class": cfg.eval.queries_per_class,
            "seed": cfg.seed,
        },
        config=cfg.echo(),
        flags=flags,
    )
    out = report.save(args.out)
    print(f"IS: {is_mean:.4f} +- {is_std:.4f}")
    print(f"FID: {report.fid:.4f}")
    print(f"mAP: {map_value:.4f}")
    print(f"report: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speech2image",
        description="Two-stage speech-to-image generation toolkit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file")
        p.add_argument(
            "--profile", default="full", choices=["full", "ci"], help="config overlay"
        )
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override a single config value (repeatable)",
        )

    p = sub.add_parser("make-dataset", help="generate the synthetic paired corpus")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train-sen", help="train the speech/image co-embedding")
    add_config_args(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=".", help="experiment root (under exp root)")
    p.add_argument("--name", default="sen", help="experiment directory name")
    p.add_argument("--resume", help="experiment dir or checkpoint to continue")
    p.set_defaults(func=cmd_train_sen)

    p = sub.add_parser("train-rdg", help="train the stacked conditional generator")
    add_config_args(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sen", help="speech co-embedding checkpoint")
    p.add_argument("--out", default=".", help="experiment root (under exp root)")
    p.add_argument("--name", default="rdg", help="experiment directory name")
    p.add_argument("--resume", help="experiment dir or checkpoint to continue")
    p.add_argument(
        "--ablate",
        action="append",
        choices=["no-dense", "no-rs", "no-sen"],
        help="switch off a component (repeatable)",
    )
    p.set_defaults(func=cmd_train_rdg)

    p = sub.add_parser("generate", help="synthesize images from speech")
    p.add_argument("--checkpoint", required=True, help="generator checkpoint")
    p.add_argument("--sen", help="speech co-embedding checkpoint")
    p.add_argument("--manifest", help="generate for every record of a manifest")
    p.add_argument("--split", default="test", choices=["train", "test", "all"])
    p.add_argument("--audio", action="append", help="a WAV file (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-caption", type=int, default=1)
    p.add_argument("--all-scales", action="store_true", help="write every pyramid scale")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated images against reals")
    add_config_args(p)
    p.add_argument("--real", required=True, help="manifest, class-dir tree, or .npz cache")
    p.add_argument("--fake", required=True, help="class-dir tree of generated images")
    p.add_argument("--split", default="test", choices=["train", "test", "all"])
    p.add_argument("--backbone", help="eval backbone checkpoint (trained if omitted)")
    p.add_argument("--rdg-checkpoint", help="stamp this generator's flags into the report")
    p.add_argument("--out", default="metrics.json", help="report path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    torch.set_num_threads(max(1, os.cpu_count() or 1))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ManifestError, AudioError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except CompatibilityError as exc:
        log.error("%s", exc)
        return EXIT_COMPAT
    except ProtocolError as exc:
        log.error("%s", exc)
        return EXIT_PROTOCOL
    except TrainingDivergedError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
