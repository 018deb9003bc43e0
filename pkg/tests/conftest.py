from __future__ import annotations

import pytest

from cdtree.codex import (
    CdtNode,
    CodifiedDecisionTree,
    InductionConfig,
    Statement,
    ValidationStats,
)
from cdtree.corpus import ActionRecord, SceneActionPair
from cdtree.oracles import make_world, planted_suite, synthesize_pairs


class ScriptedDiscriminator:
    """Answers from a question->verdict map; anything else is Unknown."""

    def __init__(self, answers: dict[str, str], default: str = "Unknown"):
        self.answers = dict(answers)
        self.default = default
        self.calls: list[tuple[str, str]] = []

    def check(self, scene: str, question: str) -> str:
        self.calls.append((scene, question))
        return self.answers.get(question, self.default)


class ScriptedJudge:
    """Pops labels from a preloaded sequence, or uses a fixed fallback."""

    def __init__(self, labels=None, fallback: str = "neutral"):
        self.labels = list(labels or [])
        self.fallback = fallback
        self.calls: list[tuple[str, str]] = []

    def judge(self, premise: str, hypothesis: str) -> str:
        self.calls.append((premise, hypothesis))
        return self.labels.pop(0) if self.labels else self.fallback


class ScriptedClient:
    """LLM text client returning canned responses in order."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if not self.responses:
            raise AssertionError("scripted client exhausted")
        return self.responses.pop(0)


def record(actor: str, text: str, index: int, episode: str = "ep") -> ActionRecord:
    return ActionRecord(actor=actor, text=text, episode=episode, index=index)


def make_pair(scene_specs, action_text, character="hero", base_index=0) -> SceneActionPair:
    scene = tuple(
        record(actor, text, base_index + i) for i, (actor, text) in enumerate(scene_specs)
    )
    action = record(character, action_text, base_index + len(scene_specs) + 1)
    return SceneActionPair(scene=scene, action=action, character=character)


def fixture_tree(config: InductionConfig | None = None) -> CodifiedDecisionTree:
    """Three-level hand-built tree:

        root(0): global g0
          --performance?--> node 1: statement s1
               --solo?--> leaf 3: statement s3
          --study?--> leaf 2: statement s2
    """
    config = config or InductionConfig()
    nodes = {
        0: CdtNode(
            id=0,
            statements=[Statement("g0", ValidationStats(8, 1, 1))],
            children=[("performance?", 1), ("study?", 2)],
        ),
        1: CdtNode(
            id=1,
            depth=1,
            question_path=["performance?"],
            statements=[Statement("s1", ValidationStats(6, 2, 2), kind="conditional")],
            children=[("solo?", 3)],
        ),
        2: CdtNode(
            id=2,
            depth=1,
            question_path=["study?"],
            statements=[Statement("s2", ValidationStats(4, 0, 0), kind="conditional")],
            is_leaf=True,
        ),
        3: CdtNode(
            id=3,
            depth=2,
            question_path=["performance?", "solo?"],
            statements=[Statement("s3", ValidationStats(4, 4, 0), kind="conditional")],
            is_leaf=True,
        ),
    }
    return CodifiedDecisionTree(character="kasumi", root=0, nodes=nodes, config=config)


@pytest.fixture
def scripted_tree():
    return fixture_tree()


@pytest.fixture
def acceptance_world():
    return make_world(seed=0)


@pytest.fixture
def acceptance_corpus(acceptance_world):
    return synthesize_pairs(acceptance_world, pairs_per_rule=20)


@pytest.fixture
def acceptance_suite(acceptance_world):
    return planted_suite(acceptance_world)


@pytest.fixture
def small_world():
    return make_world(n_rules=2, n_decoys=1, seed=7)


@pytest.fixture
def small_corpus(small_world):
    return synthesize_pairs(small_world, pairs_per_rule=16)
