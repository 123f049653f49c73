"""Quantitative metrics: Inception Score, Fréchet distance, retrieval mAP.

All three operate on backbone outputs (class posteriors or penultimate
features); wrappers accept raw image arrays plus a backbone.  Reductions
iterate in sorted, fixed order so repeated runs sum floats identically.
"""

from __future__ import annotations

import numpy as np
from scipy.special import rel_entr

from ..errors import ProtocolError


def inception_score_from_probs(
    probs: np.ndarray, splits: int = 10
) -> tuple[float, float]:
    """exp(mean KL(p(y|x) || p(y))) per split; returns (mean, std) over splits."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("need a non-empty [N, K] probability matrix")
    if probs.shape[0] < splits:
        raise ValueError(f"need at least {splits} samples for {splits} splits")
    if not np.isfinite(probs).all():
        raise ValueError("probabilities contain non-finite values")
    scores = []
    for chunk in np.array_split(probs, splits, axis=0):
        marginal = chunk.mean(axis=0, keepdims=True)
        kl = rel_entr(chunk, marginal).sum(axis=1)
        scores.append(float(np.exp(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


def inception_score(images, backbone, splits: int = 10) -> tuple[float, float]:
    probs = backbone.class_probabilities(images)
    return inception_score_from_probs(probs, splits)


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; clips tiny negatives."""
    eigvals, eigvecs = np.linalg.eigh(matrix)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def _trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """tr((cov_a cov_b)^(1/2)) computed on the symmetrized product.

    sqrt(A) B sqrt(A) shares the eigenvalues of A B but is symmetric, so
    the whole computation stays real; negative eigenvalues beyond a small
    relative tolerance indicate genuinely bad inputs and raise.
    """
    root_a = _sqrt_psd(cov_a)
    symmetric = root_a @ cov_b @ root_a
    symmetric = (symmetric + symmetric.T) / 2.0
    eigvals = np.linalg.eigvalsh(symmetric)
    scale = float(np.abs(eigvals).max()) if eigvals.size else 0.0
    if scale > 0 and eigvals.min() < -1e-3 * scale:
        raise ValueError(
            f"covariance product has significant negative spectrum "
            f"(min {eigvals.min():.3e} vs scale {scale:.3e})"
        )
    return float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())


def fid(real_features: np.ndarray, fake_features: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature sets."""
    real = np.asarray(real_features, dtype=np.float64)
    fake = np.asarray(fake_features, dtype=np.float64)
    for name, arr in (("real", real), ("fake", fake)):
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError(f"{name} features must be [N>=2, F]")
        if not np.isfinite(arr).all():
            raise ValueError(f"{name} features contain non-finite values")
    if real.shape[1] != fake.shape[1]:
        raise ValueError(
            f"feature dimensions disagree: {real.shape[1]} vs {fake.shape[1]}"
        )
    mu_r, mu_f = real.mean(axis=0), fake.mean(axis=0)
    cov_r = np.cov(real, rowvar=False)
    cov_f = np.cov(fake, rowvar=False)
    mean_term = float(((mu_r - mu_f) ** 2).sum())
    cov_term = float(np.trace(cov_r) + np.trace(cov_f)) - 2.0 * _trace_sqrt_product(
        cov_r, cov_f
    )
    return mean_term + cov_term


def average_precision(relevance: np.ndarray) -> float:
    """AP of one ranked result list; relevance is boolean in rank order."""
    relevance = np.asarray(relevance, dtype=bool)
    total_relevant = int(relevance.sum())
    if total_relevant == 0:
        raise ProtocolError("query has no relevant items in the gallery")
    ranks = np.arange(1, relevance.size + 1)
    precision_at = np.cumsum(relevance) / ranks
    return float(precision_at[relevance].sum() / total_relevant)


def retrieval_map_from_features(
    real_features: np.ndarray,
    real_class_ids: np.ndarray,
    fake_features: np.ndarray,
    fake_class_ids: np.ndarray,
    queries_per_class: int = 2,
    seed: int = 0,
) -> float:
    """Class-query retrieval: real queries rank all fakes by cosine distance.

    Every class appearing in the real set must supply enough query images
    and have at least one fake; otherwise the protocol is violated.
    """
    real = np.asarray(real_features, dtype=np.float64)
    fake = np.asarray(fake_features, dtype=np.float64)
    real_ids = np.asarray(real_class_ids, dtype=np.int64)
    fake_ids = np.asarray(fake_class_ids, dtype=np.int64)
    if real.shape[0] != real_ids.shape[0] or fake.shape[0] != fake_ids.shape[0]:
        raise ValueError("features and class ids disagree in length")
    if fake.shape[0] == 0:
        raise ProtocolError("fake gallery is empty")

    rng = np.random.default_rng(seed)
    fake_normed = fake / np.maximum(np.linalg.norm(fake, axis=1, keepdims=True), 1e-12)
    aps = []
    for cls in sorted(set(real_ids.tolist())):
        members = np.flatnonzero(real_ids == cls)
        if members.size < queries_per_class:
            raise ProtocolError(
                f"class {cls} has {members.size} real images, "
                f"needs {queries_per_class} for the query pool"
            )
        if not (fake_ids == cls).any():
            raise ProtocolError(f"class {cls} has no fake images in the gallery")
        queries = rng.choice(members, size=queries_per_class, replace=False)
        for q in queries:
            vec = real[q]
            vec = vec / max(np.linalg.norm(vec), 1e-12)
            distance = 1.0 - fake_normed @ vec
            order = np.argsort(distance, kind="stable")
            aps.append(average_precision(fake_ids[order] == cls))
    return float(np.mean(aps))


def retrieval_map(
    real_images,
    real_class_ids,
    fake_images,
    fake_class_ids,
    backbone,
    queries_per_class: int = 2,
    seed: int = 0,
) -> float:
    return retrieval_map_from_features(
        backbone.features(real_images),
        real_class_ids,
        backbone.features(fake_images),
        fake_class_ids,
        queries_per_class=queries_per_class,
        seed=seed,
    )
