"""Embedding concatenation and seeded K-Means over a node's dataset.

Seeding operates on points sorted by pair_ref so clustering is permutation
equivariant; empty clusters are repaired by reseeding to the farthest point.
Distances are squared Euclidean on the raw concatenated vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codex import InductionConfig
from .corpus import SceneActionPair, render_scene
from .exceptions import ValidationError


@dataclass
class EmbeddedPair:
    pair_ref: int
    vector: np.ndarray


@dataclass
class Clustering:
    k: int
    assignments: dict[int, int]
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)


def choose_k(n: int, min_cluster_size: int = 16, max_clusters: int = 8) -> int:
    if n < 1:
        raise ValueError("dataset size must be at least 1")
    return max(1, min(n // min_cluster_size, max_clusters))


def _pairwise_sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=float)
    centers[0] = points[int(rng.integers(n))]
    for i in range(1, k):
        d2 = _pairwise_sq_dist(points, centers[:i]).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = points[idx]
    return centers


def kmeans(
    points: Sequence[EmbeddedPair],
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> Clustering:
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(points):
        raise ValueError(f"k={k} exceeds number of points {len(points)}")
    dims = {p.vector.shape for p in points}
    if len(dims) != 1:
        raise ValidationError("all vectors in one clustering run must share dimensionality")
    ordered = sorted(points, key=lambda p: p.pair_ref)
    X = np.asarray([p.vector for p in ordered], dtype=float)
    if not np.isfinite(X).all():
        raise ValidationError("embedding vectors must be finite")

    rng = np.random.default_rng(seed)
    centers = _plusplus_init(X, k, rng)
    labels = np.zeros(len(ordered), dtype=int)
    history: list[float] = []
    inertia = float("inf")
    for _ in range(max_iter):
        d2 = _pairwise_sq_dist(X, centers)
        labels = d2.argmin(axis=1)
        labels, d2 = _repair_empty(X, centers, labels, d2, k)
        inertia = float(d2[np.arange(len(labels)), labels].sum())
        history.append(inertia)
        new_centers = np.empty_like(centers)
        for j in range(k):
            new_centers[j] = X[labels == j].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            break
    d2 = _pairwise_sq_dist(X, centers)
    labels = d2.argmin(axis=1)
    labels, d2 = _repair_empty(X, centers, labels, d2, k)
    inertia = float(d2[np.arange(len(labels)), labels].sum())
    history.append(inertia)

    assignments = {p.pair_ref: int(labels[i]) for i, p in enumerate(ordered)}
    return Clustering(k=k, assignments=assignments, centroids=centers, inertia=inertia, inertia_history=history)


def _repair_empty(X, centers, labels, d2, k):
    """Reseed each empty cluster to the point farthest from its own centroid."""
    reassigned: set[int] = set()
    for j in range(k):
        if np.any(labels == j):
            continue
        own = d2[np.arange(len(labels)), labels].copy()
        for taken in reassigned:
            own[taken] = -1.0
        idx = int(own.argmax())
        centers[j] = X[idx]
        labels[idx] = j
        reassigned.add(idx)
    if reassigned:
        d2 = _pairwise_sq_dist(X, centers)
    return labels, d2


def concat_embeddings(
    pairs: Sequence[SceneActionPair],
    embedder,
    instruction_embedding: bool = True,
    normalize_scene: bool = False,
    normalize_action: bool = False,
) -> list[EmbeddedPair]:
    out = []
    for i, pair in enumerate(pairs):
        scene_text = render_scene(pair.scene)
        if instruction_embedding:
            scene_vec = np.asarray(embedder.embed_scene(scene_text, pair.character), dtype=float)
        else:
            scene_vec = np.asarray(embedder.embed_action(scene_text), dtype=float)
        action_vec = np.asarray(embedder.embed_action(pair.action.text), dtype=float)
        if normalize_scene:
            scene_vec = _unit(scene_vec)
        if normalize_action:
            action_vec = _unit(action_vec)
        out.append(EmbeddedPair(pair_ref=i, vector=np.concatenate([scene_vec, action_vec])))
    return out


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def cluster_node_data(
    pairs: Sequence[SceneActionPair],
    embedder,
    config: InductionConfig,
) -> list[list[SceneActionPair]]:
    """Partition a node's dataset for rule mining.

    With clustering disabled the whole dataset is one cluster, preserving
    order; otherwise pairs are grouped by seeded K-Means over concatenated
    scene/action embeddings, clusters ordered by cluster id.
    """
    if not pairs:
        raise ValueError("node dataset must be non-empty")
    if not config.clustering_enabled:
        return [list(pairs)]
    k = choose_k(len(pairs), config.min_cluster_size, config.max_clusters)
    if k == 1:
        return [list(pairs)]
    points = concat_embeddings(pairs, embedder, instruction_embedding=config.instruction_embedding)
    result = kmeans(points, k=k, seed=config.seed)
    clusters: list[list[SceneActionPair]] = [[] for _ in range(k)]
    for i, pair in enumerate(pairs):
        clusters[result.assignments[i]].append(pair)
    return [c for c in clusters if c]
