"""Tree traversal and grounded action generation.

A scene descends through every edge whose question checks True (Unknown does
not descend, matching trigger filtering during induction); the statements of
all visited nodes are ranked, truncated, and injected into the generation
prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .codex import CdtNode, CodifiedDecisionTree, Statement
from .corpus import ActionRecord, render_scene
from .oracles.base import TRUE
from .templates import load_template

POLICY_DEPTH = "depth_rank"
POLICY_ACCURACY = "accuracy_rank"
POLICY_USABILITY = "usability_rank"
POLICIES = (POLICY_DEPTH, POLICY_ACCURACY, POLICY_USABILITY)

DEFAULT_POLICY = POLICY_USABILITY
DEFAULT_K = 10


@dataclass(frozen=True)
class TopKPolicy:
    kind: str = DEFAULT_POLICY
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown ranking policy {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass
class GroundingBundle:
    visited: list[int] = field(default_factory=list)
    fired_edges: list[tuple[int, str, int, str]] = field(default_factory=list)
    statements: list[tuple[Statement, int]] = field(default_factory=list)
    scene: str = ""

    def to_dict(self) -> dict:
        return {
            "visited": list(self.visited),
            "fired_edges": [
                {"parent": p, "question": q, "child": c, "verdict": v}
                for p, q, c, v in self.fired_edges
            ],
            "statements": [
                {**s.to_dict(), "depth": depth} for s, depth in self.statements
            ],
            "scene": self.scene,
        }


def traverse(tree: CodifiedDecisionTree, scene: str, discriminator) -> GroundingBundle:
    """Visit every reachable node in deterministic pre-order.

    Root statements are always collected; each child edge is checked against
    the scene and followed only on True.
    """
    if not scene.strip():
        raise ValueError("scene must be non-empty")
    bundle = GroundingBundle(scene=scene)

    def visit(node: CdtNode) -> None:
        bundle.visited.append(node.id)
        for statement in node.statements:
            bundle.statements.append((statement, node.depth))
        for question, child_id in node.children:
            verdict = discriminator.check(scene, question)
            bundle.fired_edges.append((node.id, question, child_id, verdict))
            if verdict == TRUE:
                visit(tree.node(child_id))

    visit(tree.node(tree.root))
    return bundle


def select_topk(bundle: GroundingBundle, policy: TopKPolicy) -> list[Statement]:
    """Rank the bundle's statements and truncate to k.

    The sort is stable, so equal ranks keep traversal order; undefined
    accuracy/usability sorts last.
    """
    if policy.kind == POLICY_DEPTH:
        def key(entry):
            return -entry[1]
    elif policy.kind == POLICY_ACCURACY:
        def key(entry):
            return _none_last(entry[0].stats.accuracy())
    else:
        def key(entry):
            return _none_last(entry[0].stats.usability())

    ranked = sorted(bundle.statements, key=key)
    return [statement for statement, _ in ranked[: policy.k]]


def _none_last(value: float | None) -> tuple[int, float]:
    return (1, 0.0) if value is None else (0, -value)


def assemble_prompt(scene: str, statements: Sequence[Statement], character: str) -> str:
    """Deterministic generation prompt; with no statements this is exactly the
    vanilla (ungrounded) prompt."""
    if statements:
        lines = "\n".join(f"{i + 1}. {s.text}" for i, s in enumerate(statements))
        grounding_block = load_template("rp_grounding_block").format(
            character=character, statements=lines
        )
    else:
        grounding_block = ""
    return load_template("rp_generation").format(
        character=character, grounding_block=grounding_block, scene=scene
    )


def generate_action(
    scene: str,
    tree: CodifiedDecisionTree,
    policy: TopKPolicy,
    oracles,
) -> dict:
    """traverse -> select_topk -> assemble_prompt -> generate, keeping every
    intermediate for audit."""
    bundle = traverse(tree, scene, oracles.discriminator)
    selected = select_topk(bundle, policy)
    prompt = assemble_prompt(scene, selected, tree.character)
    action = oracles.rp_generator.generate(prompt)
    return {
        "action": action,
        "bundle": bundle,
        "prompt": prompt,
        "selected": selected,
    }


def route(
    scene: Sequence[ActionRecord] | Iterable[ActionRecord],
    general: CodifiedDecisionTree,
    relation_trees: Mapping[str, CodifiedDecisionTree] | None = None,
) -> CodifiedDecisionTree:
    """Pick the relation-specific tree when the latest scene action is by a
    mapped related character; otherwise the general tree."""
    records = list(scene)
    if relation_trees and records:
        tree = relation_trees.get(records[-1].actor)
        if tree is not None:
            return tree
    return general


def vanilla_prompt(scene: str, character: str) -> str:
    return assemble_prompt(scene, [], character)


def scene_text_of(records: Sequence[ActionRecord]) -> str:
    return render_scene(records)
