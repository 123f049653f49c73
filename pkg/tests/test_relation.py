"""Relation supervision: label law, uniform oracle, learnability."""

import math

import numpy as np
import pytest
import torch

from speech2image.errors import CompatibilityError
from speech2image.rdg.relation import (
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

SIZE = 16


def _model(seed=0):
    torch.manual_seed(seed)
    return RelationClassifier(SIZE, base_channels=8, relation_dim=16)


def _rel_set(seed=0, n=4):
    g = torch.Generator().manual_seed(seed)
    mk = lambda: torch.rand(n, 3, SIZE, SIZE, generator=g) * 2 - 1
    return RelationSet(fake=mk(), ground_truth=mk(), same_class=mk(), mismatched=mk())


def test_labels_are_distinct_small_ints():
    assert {LABEL_POSITIVE, LABEL_NEGATIVE, LABEL_UNDESIRED} == {0, 1, 2}


def test_relation_vector_composition():
    model = _model().eval()
    rs = _rel_set()
    with torch.no_grad():
        fa = model.encode(rs.ground_truth)
        fb = model.encode(rs.mismatched)
        vec = model.relation_vector(rs.ground_truth, rs.mismatched)
    assert vec.shape == (4, 16)
    assert torch.allclose(vec[:, :8], fa * fb)
    assert torch.allclose(vec[:, 8:], fa - fb)


def test_relation_vector_order_sensitive():
    model = _model().eval()
    rs = _rel_set()
    with torch.no_grad():
        ab = model.relation_vector(rs.ground_truth, rs.mismatched)
        ba = model.relation_vector(rs.mismatched, rs.ground_truth)
    # product part symmetric, difference part antisymmetric
    assert torch.allclose(ab[:, :8], ba[:, :8], atol=1e-6)
    assert torch.allclose(ab[:, 8:], -ba[:, 8:], atol=1e-6)


def test_uniform_classifier_loss_is_4_log3():
    model = _model()
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.zero_()
    total, parts = relation_supervisor_loss(model, _rel_set())
    assert total.item() == pytest.approx(4 * math.log(3), abs=1e-6)
    assert parts["real_pairs"] == pytest.approx(3 * math.log(3), abs=1e-6)
    assert parts["fake_pair"] == pytest.approx(math.log(3), abs=1e-6)


def test_total_is_real_plus_fake():
    model = _model().eval()
    rs = _rel_set(3)
    total, parts = relation_supervisor_loss(model, rs)
    real = real_relation_loss(model, rs.ground_truth, rs.same_class, rs.mismatched)
    fake = fake_relation_loss(model, rs)
    assert total.item() == pytest.approx(real.item() + fake.item(), rel=1e-6)
    assert parts["real_pairs"] == pytest.approx(real.item(), rel=1e-6)


def test_mismatched_shapes_rejected():
    model = _model()
    a = torch.rand(2, 3, SIZE, SIZE)
    b = torch.rand(2, 3, SIZE // 2, SIZE // 2)
    with pytest.raises(CompatibilityError):
        model.relation_vector(a, b)


def test_wrong_resolution_rejected():
    model = _model()
    with pytest.raises(CompatibilityError):
        model.encode(torch.rand(1, 3, SIZE * 2, SIZE * 2))


def test_odd_relation_dim_rejected():
    with pytest.raises(ValueError):
        RelationClassifier(SIZE, base_channels=8, relation_dim=15)


def test_classifier_learns_real_relations():
    # distinct-looking class blobs: training on the three real-pair terms
    # should push accuracy well past the 1/3 chance level
    torch.manual_seed(5)
    rng = np.random.default_rng(5)
    model = RelationClassifier(SIZE, base_channels=8, relation_dim=64)
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)

    def class_image(cid):
        base = np.full((3, SIZE, SIZE), -0.8, dtype=np.float32)
        base[cid % 3, :, :] = 0.8
        if cid % 2:
            base[:, : SIZE // 2, :] *= -1
        # visible per-sample variation so same-class pairs are not
        # near-duplicates of the anchor-with-itself case
        base *= rng.uniform(0.5, 1.0)
        base += rng.normal(0, 0.25, (3, 1, 1)).astype(np.float32)
        return base + rng.normal(0, 0.2, (3, SIZE, SIZE)).astype(np.float32)

    def batch(n=16):
        ids = rng.integers(0, 4, size=n)
        other = (ids + 1 + rng.integers(0, 3, size=n)) % 4
        gt = np.stack([class_image(c) for c in ids])
        same = np.stack([class_image(c) for c in ids])
        mis = np.stack([class_image(c) for c in other])
        as_t = lambda a: torch.as_tensor(a, dtype=torch.float32)
        return as_t(gt), as_t(same), as_t(mis)

    model.train()
    for _ in range(250):
        gt, same, mis = batch()
        opt.zero_grad()
        loss = real_relation_loss(model, gt, same, mis)
        loss.backward()
        opt.step()

    model.eval()
    gt, same, mis = batch(64)
    acc = relation_accuracy(model, gt, same, mis)
    assert acc > 0.9, acc
