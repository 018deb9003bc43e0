from __future__ import annotations

import numpy as np
import pytest

from cdtree.clustering import (
    EmbeddedPair,
    choose_k,
    cluster_node_data,
    concat_embeddings,
    kmeans,
)
from cdtree.codex import InductionConfig
from cdtree.exceptions import ValidationError
from cdtree.oracles import HashEmbedder, PlantedRule, PlantedWorld, synthesize_pairs

from conftest import make_pair


def points_from(array) -> list[EmbeddedPair]:
    return [EmbeddedPair(pair_ref=i, vector=np.asarray(v, dtype=float)) for i, v in enumerate(array)]


def brute_force_two_way_inertia(X: np.ndarray) -> float:
    """Exhaustive optimal 2-clustering inertia (both sides non-empty)."""
    best = np.inf
    n = len(X)
    for bits in range(1, 2**n - 1):
        mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        inertia = 0.0
        for side in (X[mask], X[~mask]):
            centroid = side.mean(axis=0)
            inertia += float(((side - centroid) ** 2).sum())
        best = min(best, inertia)
    return best


class TestChooseK:
    @pytest.mark.parametrize("n,expected", [(200, 8), (15, 1), (48, 3), (16, 1), (32, 2)])
    def test_size_rule(self, n, expected):
        assert choose_k(n) == expected

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            choose_k(0)


class TestKmeans:
    def test_k1_closed_form(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(9, 4))
        result = kmeans(points_from(X), k=1, seed=0)
        assert np.allclose(result.centroids[0], X.mean(axis=0))
        expected = float(((X - X.mean(axis=0)) ** 2).sum())
        assert abs(result.inertia - expected) < 1e-9

    def test_separated_groups_split_exactly(self):
        rng = np.random.default_rng(1)
        left = rng.normal(size=(6, 3))
        right = rng.normal(size=(6, 3)) + 100.0
        X = np.vstack([left, right])
        result = kmeans(points_from(X), k=2, seed=3)
        labels = [result.assignments[i] for i in range(12)]
        assert len(set(labels[:6])) == 1 and len(set(labels[6:])) == 1
        assert labels[0] != labels[6]

    def test_matches_brute_force_on_tiny_instances(self):
        for n, seed in [(4, 0), (7, 1), (10, 2), (12, 3)]:
            rng = np.random.default_rng(seed)
            half = n // 2
            X = np.vstack(
                [rng.normal(size=(half, 2)), rng.normal(size=(n - half, 2)) + 50.0]
            )
            result = kmeans(points_from(X), k=2, seed=seed)
            assert abs(result.inertia - brute_force_two_way_inertia(X)) <= 1e-9

    def test_seed_determinism(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 6))
        a = kmeans(points_from(X), k=4, seed=11)
        b = kmeans(points_from(X), k=4, seed=11)
        assert a.assignments == b.assignments
        assert np.array_equal(a.centroids, b.centroids)
        assert a.inertia == b.inertia

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(25, 5))
        points = points_from(X)
        shuffled = [points[i] for i in rng.permutation(25)]
        assert kmeans(points, k=3, seed=2).assignments == kmeans(shuffled, k=3, seed=2).assignments

    def test_lloyd_monotone(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(30, 4)) * rng.uniform(0.5, 3.0)
            result = kmeans(points_from(X), k=int(rng.integers(2, 6)), seed=seed)
            history = result.inertia_history
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_k_exceeds_points_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            kmeans(points_from(np.zeros((3, 2))), k=4, seed=0)

    def test_non_finite_rejected(self):
        pts = points_from([[0.0, np.nan], [1.0, 2.0]])
        with pytest.raises(ValidationError):
            kmeans(pts, k=1, seed=0)

    def test_mixed_dimensionality_rejected(self):
        pts = [
            EmbeddedPair(0, np.zeros(3)),
            EmbeddedPair(1, np.zeros(4)),
        ]
        with pytest.raises(ValidationError, match="dimensionality"):
            kmeans(pts, k=1, seed=0)

    def test_duplicate_points_keep_all_clusters_non_empty(self):
        # all-identical points force empty-cluster repair
        X = np.ones((8, 3))
        result = kmeans(points_from(X), k=3, seed=4)
        assert set(result.assignments.values()) == {0, 1, 2}


class TestClusterNodeData:
    def test_disabled_returns_single_ordered_cluster(self):
        pairs = [make_pair([("a", f"s{i}")], f"act{i}", base_index=10 * i) for i in range(40)]
        config = InductionConfig(clustering_enabled=False)
        clusters = cluster_node_data(pairs, HashEmbedder(), config)
        assert clusters == [pairs]

    def test_sixteen_pairs_single_cluster(self):
        pairs = [make_pair([("a", f"s{i}")], f"act{i}", base_index=10 * i) for i in range(16)]
        clusters = cluster_node_data(pairs, HashEmbedder(), InductionConfig())
        assert len(clusters) == 1

    def test_two_disjoint_rules_align_with_clusters(self):
        world = PlantedWorld(
            rules=[
                PlantedRule(("alpha", "omen"), "fightx", "fleex"),
                PlantedRule(("market", "coin"), "tradex", "stealx"),
            ],
            seed=0,
        )
        corpus = synthesize_pairs(
            world, pairs_per_rule=16, leaf_fraction=0.0, filler_vocab=1, scene_len_range=(4, 5)
        )
        config = InductionConfig(seed=0)
        clusters = cluster_node_data(corpus.pairs, HashEmbedder(seed=0), config)
        assert len(clusters) == 2
        for cluster in clusters:
            rule_tags = {
                "r0" if "alpha" in " ".join(r.text for r in p.scene) else "r1" for p in cluster
            }
            assert len(rule_tags) == 1

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            cluster_node_data([], HashEmbedder(), InductionConfig())

    def test_instruction_flag_changes_vectors(self):
        pairs = [make_pair([("a", "alpha beta")], "acts gamma")]
        with_inst = concat_embeddings(pairs, HashEmbedder(), instruction_embedding=True)
        without = concat_embeddings(pairs, HashEmbedder(), instruction_embedding=False)
        assert not np.array_equal(with_inst[0].vector, without[0].vector)
