"""Recursive hypothesis-validation: grows a tree from a training corpus.

Per node: cluster the node's dataset, let the hypothesizer propose candidate
(question, statement) triggers per cluster, validate each statement globally
over the node's pairs, and either accept it in place, store it as a leaf
child behind its question, abolish it, or recurse into the filtered subset.

Each recursion strictly shrinks the dataset (the filter-ratio gate forces
|D'| < |D|) and increases depth, so growth terminates on every input.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .clustering import cluster_node_data
from .codex import (
    CdtNode,
    CodifiedDecisionTree,
    Hypothesis,
    InductionConfig,
    KIND_CONDITIONAL,
    KIND_GLOBAL,
    STATUS_ABOLISHED,
    STATUS_ACCEPTED,
    Statement,
    TREE_GENERAL,
    TREE_GOAL_DRIVEN,
    ValidationStats,
    serialize_tree,
    validate_tree,
)
from .corpus import Corpus, SceneActionPair, filter_relation_subset, render_scene
from .oracles.base import OracleSuite, TRUE

ACCEPT_GLOBAL = "AcceptGlobal"
ACCEPT_LEAF = "AcceptLeaf"
REJECT = "Reject"
RECURSE = "Recurse"

STAGE_GLOBAL = "global_check"
STAGE_FILTER = "trigger_filter"
STAGE_CONDITIONAL = "conditional_check"
STAGE_DUPLICATE = "duplicate_skip"

REASON_FILTER = "non-discriminative filter"
REASON_SIZE = "too few pairs"
REASON_DEPTH = "max depth"
REASON_NO_EVIDENCE = "no evidence"
REASON_LOW_ACCURACY = "accuracy below reject threshold"


@dataclass(frozen=True)
class Decision:
    value: str
    reason: str = ""

    def __post_init__(self):
        if self.value == REJECT and not self.reason:
            raise ValueError("Reject decisions carry a non-empty reason")


@dataclass
class GoalSpec:
    related: str
    instruction: str


@dataclass
class LogEvent:
    node: int
    question: str
    statement: str
    stage: str
    d_size: int
    d_prime_size: int | None = None
    stats: ValidationStats | None = None
    decision: Decision | None = None

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "question": self.question,
            "statement": self.statement,
            "stage": self.stage,
            "d_size": self.d_size,
            "d_prime_size": self.d_prime_size,
            "stats": self.stats.to_dict() if self.stats else None,
            "decision": self.decision.value if self.decision else None,
            "reason": self.decision.reason if self.decision else "",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogEvent":
        decision = None
        if d.get("decision"):
            decision = Decision(d["decision"], d.get("reason", ""))
        return cls(
            node=int(d["node"]),
            question=d["question"],
            statement=d["statement"],
            stage=d["stage"],
            d_size=int(d["d_size"]),
            d_prime_size=d.get("d_prime_size"),
            stats=ValidationStats.from_dict(d["stats"]) if d.get("stats") else None,
            decision=decision,
        )


@dataclass
class InductionLog:
    events: list[LogEvent] = field(default_factory=list)

    def add(self, event: LogEvent) -> None:
        self.events.append(event)

    def terminal_events(self) -> list[LogEvent]:
        return [e for e in self.events if e.decision is not None]

    def counts(self) -> dict[str, int]:
        out = {ACCEPT_GLOBAL: 0, ACCEPT_LEAF: 0, REJECT: 0, RECURSE: 0}
        for event in self.terminal_events():
            out[event.decision.value] += 1
        return out

    def abolished_for_node(self, node_id: int) -> list[LogEvent]:
        return [
            e
            for e in self.events
            if e.node == node_id and e.decision is not None and e.decision.value == REJECT
        ]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for event in self.events:
                handle.write(json.dumps(event.to_dict(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "InductionLog":
        log = cls()
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    log.add(LogEvent.from_dict(json.loads(line)))
        return log


@dataclass
class DiversifyContext:
    question_path: list[str] = field(default_factory=list)
    established: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# validation primitives

def _ordered_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def validate_global(
    statement: str,
    dataset: Sequence[SceneActionPair],
    nli,
    workers: int = 1,
) -> ValidationStats:
    """Count the NLI verdicts of the statement against every observed action."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    labels = _ordered_map(lambda p: nli.judge(p.action.text, statement), dataset, workers)
    return ValidationStats(
        r_e=sum(1 for l in labels if l == "entailed"),
        r_n=sum(1 for l in labels if l == "neutral"),
        r_c=sum(1 for l in labels if l == "contradicted"),
    )


def filter_by_trigger(
    question: str,
    dataset: Sequence[SceneActionPair],
    discriminator,
    workers: int = 1,
) -> list[SceneActionPair]:
    """Keep pairs whose scene passes the check; False and Unknown are excluded."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    verdicts = _ordered_map(
        lambda p: discriminator.check(render_scene(p.scene), question), dataset, workers
    )
    return [pair for pair, verdict in zip(dataset, verdicts) if verdict == TRUE]


def decide(
    stats: ValidationStats,
    d_size: int,
    d_prime_size: int,
    depth: int,
    config: InductionConfig,
) -> Decision:
    """Select the next operation for a conditionally validated hypothesis.

    Accept as a leaf at or above theta_acc; reject below theta_rej or with no
    decided verdicts; otherwise recurse only when the filter is discriminative
    (|D'|/|D| < theta_f), the subset is still trainable, and the child would
    stay within the depth budget.
    """
    accuracy = stats.accuracy()
    if accuracy is None:
        return Decision(REJECT, REASON_NO_EVIDENCE)
    if accuracy >= config.theta_acc:
        return Decision(ACCEPT_LEAF)
    if accuracy < config.theta_rej:
        return Decision(REJECT, REASON_LOW_ACCURACY)
    if not d_prime_size / d_size < config.theta_f:
        return Decision(REJECT, REASON_FILTER)
    if d_prime_size < config.min_node_data:
        return Decision(REJECT, REASON_SIZE)
    if depth + 1 >= config.d_max:
        return Decision(REJECT, REASON_DEPTH)
    return Decision(RECURSE)


def boost_prune(
    candidates: Sequence[tuple[Hypothesis, int]],
    budget: int | None,
) -> list[Hypothesis]:
    """Keep the top-budget hypotheses by source-cluster size, stable on ties."""
    if budget is None:
        return [h for h, _ in candidates]
    if budget < 1:
        raise ValueError("boost budget must be at least 1")
    ranked = sorted(
        enumerate(candidates), key=lambda item: (-item[1][1], item[0])
    )
    keep = sorted(i for i, _ in ranked[:budget])
    return [candidates[i][0] for i in keep]


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().lower()


# ---------------------------------------------------------------------------
# the engine

class InductionEngine:
    def __init__(
        self,
        config: InductionConfig,
        oracles: OracleSuite,
        goal_instruction: str | None = None,
        checkpoint_path: str | Path | None = None,
        progress: Callable[[int, int], None] | None = None,
        workers: int = 1,
        dataset_capture: dict[int, list[SceneActionPair]] | None = None,
    ):
        self.config = config.validate()
        self.oracles = oracles
        self.goal_instruction = goal_instruction
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.progress = progress
        self.workers = workers
        self.dataset_capture = dataset_capture
        self.log = InductionLog()
        self.nodes_grown = 0
        self._next_id = 0
        self._parents: dict[int, int] = {}
        self.tree: CodifiedDecisionTree | None = None

    # -- node bookkeeping --------------------------------------------------

    def _new_node(self, parent: CdtNode | None, question: str | None, is_leaf: bool = False) -> CdtNode:
        node = CdtNode(
            id=self._next_id,
            depth=0 if parent is None else parent.depth + 1,
            question_path=[] if parent is None else parent.question_path + [question],
            is_leaf=is_leaf,
        )
        self._next_id += 1
        self.tree.nodes[node.id] = node
        if parent is not None:
            parent.children.append((question, node.id))
            self._parents[node.id] = parent.id
        return node

    def diversify_context(self, node: CdtNode) -> DiversifyContext:
        """Root-to-node questions plus accepted statements along that path;
        empty whenever diversification is switched off."""
        if not self.config.diversification:
            return DiversifyContext()
        established: list[str] = []
        path_ids = [node.id]
        while path_ids[-1] in self._parents:
            path_ids.append(self._parents[path_ids[-1]])
        for node_id in reversed(path_ids):
            for statement in self.tree.nodes[node_id].statements:
                if statement.status == STATUS_ACCEPTED:
                    established.append(statement.text)
        return DiversifyContext(question_path=list(node.question_path), established=established)

    # -- candidate generation ----------------------------------------------

    def _propose_for_cluster(self, node: CdtNode, cluster: list[SceneActionPair]) -> list[Hypothesis]:
        context = self.diversify_context(node)
        proposals = self.oracles.hypothesizer.propose(
            cluster,
            self.tree.character,
            context.question_path,
            context.established,
            self.config.hypotheses_per_cluster,
            goal_instruction=self.goal_instruction,
        )
        return list(proposals[: self.config.hypotheses_per_cluster])

    def _candidate_stream(
        self, node: CdtNode, clusters: list[list[SceneActionPair]]
    ) -> Iterable[Hypothesis]:
        if self.config.boosted_budget is not None:
            gathered: list[tuple[Hypothesis, int]] = []
            for cluster_id, cluster in enumerate(clusters):
                for hyp in self._propose_for_cluster(node, cluster):
                    hyp.source_cluster = cluster_id
                    gathered.append((hyp, len(cluster)))
            yield from boost_prune(gathered, self.config.boosted_budget)
        else:
            for cluster_id, cluster in enumerate(clusters):
                for hyp in self._propose_for_cluster(node, cluster):
                    hyp.source_cluster = cluster_id
                    yield hyp

    # -- growth --------------------------------------------------------------

    def grow(self, node: CdtNode, dataset: list[SceneActionPair]) -> None:
        if self.dataset_capture is not None:
            self.dataset_capture[node.id] = list(dataset)
        clusters = cluster_node_data(dataset, self.oracles.embedder, self.config)
        seen: set[tuple[str, str]] = set()
        for hyp in self._candidate_stream(node, clusters):
            key = (_normalize(hyp.question), _normalize(hyp.statement))
            if key in seen:
                self.log.add(
                    LogEvent(node.id, hyp.question, hyp.statement, STAGE_DUPLICATE, len(dataset))
                )
                continue
            seen.add(key)
            self._validate_candidate(node, dataset, hyp)
        self.nodes_grown += 1
        self._checkpoint()
        if self.progress:
            calls = getattr(self.oracles, "call_count", 0)
            self.progress(self.nodes_grown, calls)

    def _validate_candidate(self, node: CdtNode, dataset: list[SceneActionPair], hyp: Hypothesis) -> None:
        global_stats = validate_global(hyp.statement, dataset, self.oracles.nli, self.workers)
        accuracy = global_stats.accuracy()
        if accuracy is not None and accuracy >= self.config.theta_acc:
            node.statements.append(
                Statement(hyp.statement, global_stats, KIND_GLOBAL, STATUS_ACCEPTED)
            )
            self.log.add(
                LogEvent(
                    node.id,
                    hyp.question,
                    hyp.statement,
                    STAGE_GLOBAL,
                    len(dataset),
                    stats=global_stats,
                    decision=Decision(ACCEPT_GLOBAL),
                )
            )
            return
        self.log.add(
            LogEvent(
                node.id, hyp.question, hyp.statement, STAGE_GLOBAL, len(dataset), stats=global_stats
            )
        )

        subset = filter_by_trigger(hyp.question, dataset, self.oracles.discriminator, self.workers)
        self.log.add(
            LogEvent(
                node.id,
                hyp.question,
                hyp.statement,
                STAGE_FILTER,
                len(dataset),
                d_prime_size=len(subset),
            )
        )
        if subset:
            conditional_stats = validate_global(hyp.statement, subset, self.oracles.nli, self.workers)
        else:
            conditional_stats = ValidationStats()
        decision = decide(conditional_stats, len(dataset), len(subset), node.depth, self.config)
        self.log.add(
            LogEvent(
                node.id,
                hyp.question,
                hyp.statement,
                STAGE_CONDITIONAL,
                len(dataset),
                d_prime_size=len(subset),
                stats=conditional_stats,
                decision=decision,
            )
        )

        if decision.value == ACCEPT_LEAF:
            leaf = self._new_node(node, hyp.question, is_leaf=True)
            leaf.statements.append(
                Statement(hyp.statement, conditional_stats, KIND_CONDITIONAL, STATUS_ACCEPTED)
            )
            if self.dataset_capture is not None:
                self.dataset_capture[leaf.id] = list(subset)
        elif decision.value == RECURSE:
            child = self._new_node(node, hyp.question)
            self.grow(child, subset)
        elif self.config.keep_abolished:
            node.statements.append(
                Statement(hyp.statement, conditional_stats, KIND_CONDITIONAL, STATUS_ABOLISHED)
            )

    # -- persistence ----------------------------------------------------------

    def _checkpoint(self) -> None:
        if self.checkpoint_path is None:
            return
        payload = {
            "tree": json.loads(serialize_tree(self.tree)) if self.tree else None,
            "events": [e.to_dict() for e in self.log.events],
            "nodes_grown": self.nodes_grown,
        }
        tmp = self.checkpoint_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        tmp.replace(self.checkpoint_path)


def _provenance(character: str, config: InductionConfig, n_pairs: int) -> str:
    digest = hashlib.sha256(
        json.dumps({"character": character, "config": config.to_dict(), "pairs": n_pairs}, sort_keys=True).encode()
    ).hexdigest()[:16]
    return f"induction-{digest}"


def induce(
    corpus: Corpus,
    config: InductionConfig,
    oracles: OracleSuite,
    goal: GoalSpec | None = None,
    checkpoint_path: str | Path | None = None,
    progress: Callable[[int, int], None] | None = None,
    workers: int = 1,
    dataset_capture: dict[int, list[SceneActionPair]] | None = None,
) -> tuple[CodifiedDecisionTree, InductionLog]:
    """Grow a tree from scratch on a training corpus.

    With a goal, the corpus is first narrowed to pairs that immediately follow
    the related character, and the goal instruction is threaded into every
    hypothesizer call.  Resumption after a failure is a deterministic re-run:
    the persistent oracle cache makes already-validated calls free, and the
    checkpoint file records progress for auditing.
    """
    config = config.validate()
    pairs = list(corpus.pairs)
    kind, relation_target, goal_instruction = TREE_GENERAL, None, None
    if goal is not None:
        pairs = filter_relation_subset(pairs, goal.related)
        kind, relation_target, goal_instruction = TREE_GOAL_DRIVEN, goal.related, goal.instruction
    if len(pairs) < config.min_node_data:
        raise ValueError(
            f"corpus too small: {len(pairs)} pairs < min_node_data {config.min_node_data}"
        )

    engine = InductionEngine(
        config,
        oracles,
        goal_instruction=goal_instruction,
        checkpoint_path=checkpoint_path,
        progress=progress,
        workers=workers,
        dataset_capture=dataset_capture,
    )
    engine.tree = CodifiedDecisionTree(
        character=corpus.character,
        root=0,
        nodes={},
        config=config,
        provenance=_provenance(corpus.character, config, len(pairs)),
        kind=kind,
        relation_target=relation_target,
    )
    root = engine._new_node(parent=None, question=None)
    engine.grow(root, pairs)
    validate_tree(engine.tree)
    return engine.tree, engine.log
