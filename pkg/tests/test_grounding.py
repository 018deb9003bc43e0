from __future__ import annotations

import pytest

from cdtree.codex import (
    CdtNode,
    CodifiedDecisionTree,
    InductionConfig,
    Statement,
    ValidationStats,
)
from cdtree.grounding import (
    GroundingBundle,
    TopKPolicy,
    assemble_prompt,
    generate_action,
    route,
    select_topk,
    traverse,
    vanilla_prompt,
)
from cdtree.induction import induce
from cdtree.oracles import make_world, planted_suite, synthesize_pairs

from conftest import ScriptedDiscriminator, fixture_tree, record


class TestTraverse:
    def test_root_only_tree(self):
        tree = CodifiedDecisionTree(
            character="x",
            root=0,
            nodes={0: CdtNode(id=0, statements=[Statement("g", ValidationStats(1, 0, 0))])},
            config=InductionConfig(),
        )
        bundle = traverse(tree, "any scene", ScriptedDiscriminator({}))
        assert bundle.visited == [0]
        assert bundle.fired_edges == []
        assert [s.text for s, _ in bundle.statements] == ["g"]

    def test_branch_selection(self, scripted_tree):
        disc = ScriptedDiscriminator({"performance?": "True", "study?": "False", "solo?": "False"})
        bundle = traverse(scripted_tree, "a live show invitation", disc)
        assert bundle.visited == [0, 1]
        assert [s.text for s, _ in bundle.statements] == ["g0", "s1"]
        verdicts = {q: v for _, q, _, v in bundle.fired_edges}
        assert verdicts == {"performance?": "True", "study?": "False", "solo?": "False"}

    def test_all_true_visits_everything(self, scripted_tree):
        disc = ScriptedDiscriminator({}, default="True")
        bundle = traverse(scripted_tree, "scene", disc)
        assert bundle.visited == [0, 1, 3, 2]

    def test_unknown_does_not_descend(self, scripted_tree):
        disc = ScriptedDiscriminator({}, default="Unknown")
        bundle = traverse(scripted_tree, "scene", disc)
        assert bundle.visited == [0]

    def test_path_soundness(self, scripted_tree):
        answers = {"performance?": "True", "solo?": "True", "study?": "False"}
        bundle = traverse(scripted_tree, "scene", ScriptedDiscriminator(answers))
        for node_id in bundle.visited:
            path = scripted_tree.nodes[node_id].question_path
            assert all(answers[q] == "True" for q in path)

    def test_empty_scene_rejected(self, scripted_tree):
        with pytest.raises(ValueError):
            traverse(scripted_tree, "   ", ScriptedDiscriminator({}))

    def test_flipping_one_verdict_changes_exactly_that_subtree(self, scripted_tree):
        base = traverse(
            scripted_tree,
            "scene",
            ScriptedDiscriminator({"performance?": "True", "solo?": "True", "study?": "True"}),
        )
        flipped = traverse(
            scripted_tree,
            "scene",
            ScriptedDiscriminator({"performance?": "False", "solo?": "True", "study?": "True"}),
        )
        base_texts = {s.text for s, _ in base.statements}
        flipped_texts = {s.text for s, _ in flipped.statements}
        # the performance subtree carries s1 and s3
        assert base_texts - flipped_texts == {"s1", "s3"}
        assert flipped_texts <= base_texts


class TestSelectTopK:
    def bundle_with(self, entries) -> GroundingBundle:
        bundle = GroundingBundle(scene="s")
        for text, stats, depth in entries:
            bundle.statements.append((Statement(text, stats, kind="conditional"), depth))
        return bundle

    def test_usability_orders_by_applicability(self):
        bundle = self.bundle_with(
            [("a", ValidationStats(4, 0, 0), 0), ("b", ValidationStats(4, 4, 0), 0)]
        )
        ranked = select_topk(bundle, TopKPolicy("usability_rank", 5))
        assert [s.text for s in ranked] == ["a", "b"]

    def test_accuracy_tie_keeps_traversal_order(self):
        bundle = self.bundle_with(
            [("a", ValidationStats(4, 0, 0), 0), ("b", ValidationStats(4, 4, 0), 0)]
        )
        ranked = select_topk(bundle, TopKPolicy("accuracy_rank", 5))
        assert [s.text for s in ranked] == ["a", "b"]

    def test_depth_rank(self):
        bundle = self.bundle_with(
            [
                ("d0", ValidationStats(1, 0, 0), 0),
                ("d2", ValidationStats(1, 0, 0), 2),
                ("d1", ValidationStats(1, 0, 0), 1),
            ]
        )
        ranked = select_topk(bundle, TopKPolicy("depth_rank", 5))
        assert [s.text for s in ranked] == ["d2", "d1", "d0"]

    def test_truncates_to_k(self):
        bundle = self.bundle_with(
            [(f"s{i}", ValidationStats(i + 1, 0, 0), 0) for i in range(6)]
        )
        assert len(select_topk(bundle, TopKPolicy("usability_rank", 2))) == 2

    def test_k_above_available_returns_all(self):
        bundle = self.bundle_with([("only", ValidationStats(1, 0, 0), 0)])
        assert len(select_topk(bundle, TopKPolicy("usability_rank", 10))) == 1

    def test_undefined_accuracy_sorts_last(self):
        bundle = self.bundle_with(
            [("never", ValidationStats(0, 3, 0), 0), ("solid", ValidationStats(2, 0, 1), 0)]
        )
        ranked = select_topk(bundle, TopKPolicy("accuracy_rank", 5))
        assert [s.text for s in ranked] == ["solid", "never"]

    def test_usability_equals_accuracy_when_no_neutrals(self):
        entries = [
            (f"s{i}", ValidationStats(e, 0, c), i % 3)
            for i, (e, c) in enumerate([(3, 1), (5, 0), (1, 4), (2, 2), (4, 1)])
        ]
        bundle = self.bundle_with(entries)
        by_acc = [s.text for s in select_topk(bundle, TopKPolicy("accuracy_rank", 9))]
        by_usab = [s.text for s in select_topk(bundle, TopKPolicy("usability_rank", 9))]
        assert by_acc == by_usab

    def test_bad_policy_rejected(self):
        with pytest.raises(ValueError):
            TopKPolicy("coolness_rank", 3)


class TestAssemblePrompt:
    def test_empty_statements_is_vanilla(self):
        assert assemble_prompt("the scene", [], "hero") == vanilla_prompt("the scene", "hero")

    def test_three_enumerated_lines_in_order(self):
        statements = [Statement(f"rule {i}", ValidationStats(1, 0, 0)) for i in range(3)]
        prompt = assemble_prompt("scene", statements, "hero")
        assert "1. rule 0\n2. rule 1\n3. rule 2" in prompt

    def test_deterministic(self):
        statements = [Statement("r", ValidationStats(1, 0, 0))]
        assert assemble_prompt("s", statements, "h") == assemble_prompt("s", statements, "h")


class TestGenerateAction:
    def test_grounded_behavior_shows_up_in_mock_action(self):
        world = make_world(n_rules=1, n_decoys=0, seed=6)
        corpus = synthesize_pairs(world, pairs_per_rule=20, leaf_fraction=1.0)
        suite = planted_suite(world)
        tree, _ = induce(corpus, InductionConfig(), suite)
        scene = "narrator: trig0a trig0b appear"
        result = generate_action(scene, tree, TopKPolicy(), suite)
        assert "beh0" in result["action"]
        assert result["bundle"].visited[0] == tree.root

    def test_empty_tree_degenerates_to_vanilla(self):
        tree = CodifiedDecisionTree(
            character="hero", root=0, nodes={0: CdtNode(id=0)}, config=InductionConfig()
        )
        world = make_world(seed=1)
        suite = planted_suite(world)
        result = generate_action("narrator: nothing here", tree, TopKPolicy(), suite)
        assert result["prompt"] == vanilla_prompt("narrator: nothing here", "hero")

    def test_two_runs_identical(self, scripted_tree):
        world = make_world(seed=2)
        suite = planted_suite(world)
        first = generate_action("narrator: amb0", scripted_tree, TopKPolicy(), suite)
        second = generate_action("narrator: amb0", scripted_tree, TopKPolicy(), suite)
        assert first["action"] == second["action"]
        assert first["prompt"] == second["prompt"]


class TestRoute:
    def make_trees(self):
        general = fixture_tree()
        arisa = fixture_tree()
        arisa.relation_target = "arisa"
        return general, {"arisa": arisa}

    def test_relation_tree_on_latest_actor(self):
        general, relations = self.make_trees()
        scene = [record("saya", "hi", 0), record("arisa", "hey", 1)]
        assert route(scene, general, relations) is relations["arisa"]

    def test_empty_scene_falls_back(self):
        general, relations = self.make_trees()
        assert route([], general, relations) is general

    def test_unmapped_actor_falls_back(self):
        general, relations = self.make_trees()
        scene = [record("arisa", "hi", 0), record("saya", "bye", 1)]
        assert route(scene, general, relations) is general

    def test_no_relation_map(self):
        general, _ = self.make_trees()
        scene = [record("arisa", "hi", 0)]
        assert route(scene, general, None) is general
