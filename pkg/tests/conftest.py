"""Shared fixtures: a small synthetic corpus reused across the unit tests."""

import pytest

from speech2image.dataset import PairedCorpus
from speech2image.audio import FrontendConfig
from speech2image.manifest import load_manifest
from speech2image.synthetic import make_synthetic_corpus


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_corpus")
    make_synthetic_corpus(seed=7, num_classes=4, images_per_class=6, out_dir=out)
    return out


@pytest.fixture(scope="session")
def tiny_manifest(tiny_corpus_dir):
    return tiny_corpus_dir / "manifest.tsv"


@pytest.fixture(scope="session")
def tiny_entries(tiny_manifest):
    return load_manifest(tiny_manifest)


@pytest.fixture(scope="session")
def tiny_paired_corpus(tiny_entries):
    # 64px only keeps decode time negligible for loss/encoder tests
    return PairedCorpus(tiny_entries, FrontendConfig(), None, scales=(64,))
