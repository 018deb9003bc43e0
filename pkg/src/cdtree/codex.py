"""Core tree data model: statements, nodes, validation counts, configuration.

Trees are immutable values after construction; every edit produces a new
revision.  Serialization is canonical: serializing the same tree twice
yields byte-identical output.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, asdict
from typing import Any, Iterator

from .exceptions import EditError, ValidationError

KIND_GLOBAL = "global"
KIND_CONDITIONAL = "conditional"
STATUS_ACCEPTED = "accepted"
STATUS_ABOLISHED = "abolished"

TREE_GENERAL = "general"
TREE_GOAL_DRIVEN = "goal_driven"


@dataclass(frozen=True)
class ValidationStats:
    """Counts of entailed / neutral / contradicted verdicts for one statement."""

    r_e: int = 0
    r_n: int = 0
    r_c: int = 0

    def __post_init__(self):
        if min(self.r_e, self.r_n, self.r_c) < 0:
            raise ValidationError("verdict counts must be non-negative")

    def accuracy(self) -> float | None:
        """Entailed over decided verdicts; None when never decided."""
        decided = self.r_e + self.r_c
        return self.r_e / decided if decided > 0 else None

    def usability(self) -> float | None:
        """Entailed over all verdicts; None when no verdicts at all."""
        total = self.r_e + self.r_n + self.r_c
        return self.r_e / total if total > 0 else None

    def to_dict(self) -> dict:
        return {"r_e": self.r_e, "r_n": self.r_n, "r_c": self.r_c}

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationStats":
        return cls(int(d["r_e"]), int(d["r_n"]), int(d["r_c"]))


@dataclass
class Hypothesis:
    """A candidate trigger: filtering question paired with a behavior claim."""

    question: str
    statement: str
    source_cluster: int = 0
    goal_tag: str | None = None

    def __post_init__(self):
        if not self.question.strip() or not self.statement.strip():
            raise ValidationError("hypothesis question and statement must be non-empty")


@dataclass
class Statement:
    text: str
    stats: ValidationStats
    kind: str = KIND_GLOBAL
    status: str = STATUS_ACCEPTED

    def __post_init__(self):
        if self.kind not in (KIND_GLOBAL, KIND_CONDITIONAL):
            raise ValidationError(f"unknown statement kind {self.kind!r}")
        if self.status not in (STATUS_ACCEPTED, STATUS_ABOLISHED):
            raise ValidationError(f"unknown statement status {self.status!r}")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "kind": self.kind,
            "status": self.status,
            "stats": self.stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Statement":
        return cls(
            text=d["text"],
            stats=ValidationStats.from_dict(d["stats"]),
            kind=d.get("kind", KIND_GLOBAL),
            status=d.get("status", STATUS_ACCEPTED),
        )


@dataclass
class CdtNode:
    id: int
    depth: int = 0
    question_path: list[str] = field(default_factory=list)
    statements: list[Statement] = field(default_factory=list)
    children: list[tuple[str, int]] = field(default_factory=list)
    is_leaf: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "depth": self.depth,
            "question_path": list(self.question_path),
            "statements": [s.to_dict() for s in self.statements],
            "children": [{"question": q, "child": c} for q, c in self.children],
            "is_leaf": self.is_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CdtNode":
        return cls(
            id=int(d["id"]),
            depth=int(d["depth"]),
            question_path=list(d.get("question_path", [])),
            statements=[Statement.from_dict(s) for s in d.get("statements", [])],
            children=[(c["question"], int(c["child"])) for c in d.get("children", [])],
            is_leaf=bool(d.get("is_leaf", False)),
        )


@dataclass
class InductionConfig:
    theta_acc: float = 0.75
    theta_rej: float = 0.50
    theta_f: float = 0.75
    d_max: int = 4
    min_node_data: int = 16
    hypotheses_per_cluster: int = 3
    min_cluster_size: int = 16
    max_clusters: int = 8
    boosted_budget: int | None = None
    keep_abolished: bool = False
    diversification: bool = True
    clustering_enabled: bool = True
    instruction_embedding: bool = True
    seed: int = 0

    def validate(self) -> "InductionConfig":
        if not (0.0 <= self.theta_rej < self.theta_acc <= 1.0):
            raise ValidationError(
                "thresholds must satisfy 0 <= theta_rej < theta_acc <= 1 "
                f"(got theta_rej={self.theta_rej}, theta_acc={self.theta_acc})"
            )
        if not (0.0 < self.theta_f <= 1.0):
            raise ValidationError(f"theta_f must be in (0, 1] (got {self.theta_f})")
        if self.d_max < 1:
            raise ValidationError("d_max must be a positive integer")
        if self.min_node_data < 1 or self.hypotheses_per_cluster < 1:
            raise ValidationError("min_node_data and hypotheses_per_cluster must be positive")
        if self.min_cluster_size < 1 or self.max_clusters < 1:
            raise ValidationError("min_cluster_size and max_clusters must be positive")
        if self.boosted_budget is not None and self.boosted_budget < 1:
            raise ValidationError("boosted_budget must be positive when set")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InductionConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known).validate()


@dataclass
class CodifiedDecisionTree:
    character: str
    root: int
    nodes: dict[int, CdtNode]
    config: InductionConfig
    provenance: str = ""
    kind: str = TREE_GENERAL
    relation_target: str | None = None
    revision: int = 0

    # -- structure helpers -------------------------------------------------

    def node(self, node_id: int) -> CdtNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ValidationError(f"unknown node {node_id}") from None

    def walk(self) -> Iterator[CdtNode]:
        """Deterministic pre-order traversal of the whole tree."""
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            for _, child in reversed(node.children):
                stack.append(child)

    def parent_map(self) -> dict[int, int]:
        parents: dict[int, int] = {}
        for node in self.nodes.values():
            for _, child in node.children:
                parents[child] = node.id
        return parents

    def statement_count(self, status: str | None = None) -> int:
        return sum(
            1
            for node in self.nodes.values()
            for s in node.statements
            if status is None or s.status == status
        )

    def max_depth(self) -> int:
        return max(n.depth for n in self.nodes.values())


# ---------------------------------------------------------------------------
# validation

def validate_tree(tree: CodifiedDecisionTree) -> CodifiedDecisionTree:
    """Check every structural invariant, raising ValidationError naming the
    first violated one."""
    tree.config.validate()
    if tree.root not in tree.nodes:
        raise ValidationError(f"orphan root: node {tree.root} missing")
    parents: dict[int, int] = {}
    for node in tree.nodes.values():
        if node.id != tree.root and node.depth < 1:
            raise ValidationError(f"non-root node {node.id} has depth {node.depth}")
        if len(node.question_path) != node.depth:
            raise ValidationError(
                f"question_path length {len(node.question_path)} != depth {node.depth} at node {node.id}"
            )
        if node.depth > tree.config.d_max:
            raise ValidationError(f"node {node.id} depth {node.depth} exceeds d_max {tree.config.d_max}")
        if node.is_leaf and (len(node.statements) != 1 or node.children):
            raise ValidationError(f"leaf invariant violated at node {node.id}")
        for question, child in node.children:
            if child not in tree.nodes:
                raise ValidationError(f"missing child {child} referenced by node {node.id}")
            if child in parents:
                raise ValidationError(f"node {child} has multiple parents")
            parents[child] = node.id
            child_node = tree.nodes[child]
            if child_node.depth != node.depth + 1:
                raise ValidationError(f"depth mismatch at node {child}")
            if child_node.question_path != node.question_path + [question]:
                raise ValidationError(f"question_path mismatch at node {child}")
    if tree.root in parents:
        raise ValidationError("cycle detected: root has a parent")
    reachable = {n.id for n in tree.walk()}
    for node_id in tree.nodes:
        if node_id != tree.root and node_id not in parents:
            raise ValidationError(f"orphan node {node_id}")
        if node_id not in reachable:
            raise ValidationError(f"orphan node {node_id}: unreachable from root")
    if tree.kind not in (TREE_GENERAL, TREE_GOAL_DRIVEN):
        raise ValidationError(f"unknown tree kind {tree.kind!r}")
    return tree


# ---------------------------------------------------------------------------
# canonical serialization

def tree_to_document(tree: CodifiedDecisionTree) -> dict:
    return {
        "character": tree.character,
        "kind": tree.kind,
        "relation_target": tree.relation_target,
        "config": tree.config.to_dict(),
        "root": tree.root,
        "nodes": [tree.nodes[i].to_dict() for i in sorted(tree.nodes)],
        "revision": tree.revision,
        "provenance": tree.provenance,
    }


def serialize_tree(tree: CodifiedDecisionTree) -> str:
    validate_tree(tree)
    return json.dumps(tree_to_document(tree), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def tree_from_document(doc: dict) -> CodifiedDecisionTree:
    try:
        nodes = {int(n["id"]): CdtNode.from_dict(n) for n in doc["nodes"]}
        tree = CodifiedDecisionTree(
            character=doc["character"],
            root=int(doc["root"]),
            nodes=nodes,
            config=InductionConfig.from_dict(doc.get("config", {})),
            provenance=doc.get("provenance", ""),
            kind=doc.get("kind", TREE_GENERAL),
            relation_target=doc.get("relation_target"),
            revision=int(doc.get("revision", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed tree document: {exc}") from exc
    return validate_tree(tree)


def deserialize_tree(text: str) -> CodifiedDecisionTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"tree document is not valid JSON: {exc}") from exc
    return tree_from_document(doc)


# ---------------------------------------------------------------------------
# structural editing

def edit_tree(tree: CodifiedDecisionTree, command: dict[str, Any]) -> CodifiedDecisionTree:
    """Apply one edit command and return a new tree revision.

    Commands: ``update_statement(node, index, text)``, ``delete_node(node)``,
    ``add_child(parent, question)``, ``detach_statement(node, index)``.
    Invariant-breaking commands are rejected with EditError.
    """
    op = command.get("op")
    new = copy.deepcopy(tree)

    if op == "update_statement":
        node = _require_node(new, command, "node")
        idx = _require_index(node, command)
        node.statements[idx].text = _require_text(command)
    elif op == "detach_statement":
        node = _require_node(new, command, "node")
        idx = _require_index(node, command)
        if node.is_leaf:
            raise EditError("leaf nodes keep exactly one statement; detach rejected")
        del node.statements[idx]
    elif op == "delete_node":
        node = _require_node(new, command, "node")
        if node.id == new.root:
            raise EditError("cannot delete the root node")
        parents = new.parent_map()
        doomed = _subtree_ids(new, node.id)
        parent = new.nodes[parents[node.id]]
        parent.children = [(q, c) for q, c in parent.children if c != node.id]
        for nid in doomed:
            del new.nodes[nid]
    elif op == "add_child":
        parent = _require_node(new, command, "parent")
        if parent.is_leaf:
            raise EditError("leaf nodes cannot grow children")
        question = str(command.get("question", "")).strip()
        if not question:
            raise EditError("add_child requires a non-empty question")
        if parent.depth + 1 > new.config.d_max:
            raise EditError(f"child depth {parent.depth + 1} would exceed d_max {new.config.d_max}")
        child = CdtNode(
            id=max(new.nodes) + 1,
            depth=parent.depth + 1,
            question_path=parent.question_path + [question],
        )
        new.nodes[child.id] = child
        parent.children.append((question, child.id))
    else:
        raise EditError(f"unknown edit op {op!r}")

    new.revision = tree.revision + 1
    return validate_tree(new)


def _subtree_ids(tree: CodifiedDecisionTree, node_id: int) -> list[int]:
    out, stack = [], [node_id]
    while stack:
        nid = stack.pop()
        out.append(nid)
        stack.extend(c for _, c in tree.nodes[nid].children)
    return out


def _require_node(tree: CodifiedDecisionTree, command: dict, key: str) -> CdtNode:
    try:
        return tree.node(int(command[key]))
    except (KeyError, TypeError, ValueError):
        raise EditError(f"edit command requires a valid {key!r} id") from None


def _require_index(node: CdtNode, command: dict) -> int:
    try:
        idx = int(command["index"])
        if not 0 <= idx < len(node.statements):
            raise ValueError
        return idx
    except (KeyError, TypeError, ValueError):
        raise EditError(f"statement index out of range at node {node.id}") from None


def _require_text(command: dict) -> str:
    text = str(command.get("text", "")).strip()
    if not text:
        raise EditError("statement text must be non-empty")
    return text
