"""Deterministic planted-rule testkit.

A planted world defines token-level rules: a scene satisfies a rule's
question iff it contains all the rule's trigger tokens, and an action is
entailed/contradicted by the rule's statement iff it contains the rule's
behavior/contradiction token.  Questions serialize as ``contains: t1,t2``
and statements as ``does: b`` so oracle behavior stays auditable in logs.

All oracles here are pure: identical inputs yield identical outputs for a
fixed seed, which makes desk-scale induction runs bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..codex import CodifiedDecisionTree, Hypothesis, STATUS_ACCEPTED
from ..corpus import ActionRecord, Corpus, SceneActionPair, render_scene
from ..exceptions import ValidationError
from .base import (
    CONTRADICTED,
    ENTAILED,
    FALSE,
    NEUTRAL,
    TRUE,
    UNKNOWN,
    OracleSuite,
)

_TOKEN_RE = re.compile(r"[a-z0-9_]+")

QUESTION_PREFIX = "contains: "
STATEMENT_PREFIX = "does: "


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def _stable_unit(seed: int, *parts: str) -> float:
    digest = hashlib.sha256(("|".join([str(seed), *parts])).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass(frozen=True)
class PlantedRule:
    trigger_tokens: tuple[str, ...]
    behavior_token: str
    contradiction_token: str

    def __post_init__(self):
        if self.behavior_token == self.contradiction_token:
            raise ValidationError("behavior and contradiction tokens must differ")

    def question(self) -> str:
        return QUESTION_PREFIX + ",".join(sorted(self.trigger_tokens))

    def statement(self) -> str:
        return STATEMENT_PREFIX + self.behavior_token

    def to_dict(self) -> dict:
        return {
            "trigger_tokens": list(self.trigger_tokens),
            "behavior_token": self.behavior_token,
            "contradiction_token": self.contradiction_token,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantedRule":
        return cls(tuple(d["trigger_tokens"]), d["behavior_token"], d["contradiction_token"])


@dataclass
class PlantedWorld:
    rules: list[PlantedRule] = field(default_factory=list)
    decoys: list[PlantedRule] = field(default_factory=list)
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        triggers = [frozenset(r.trigger_tokens) for r in self.all_rules()]
        if len(set(triggers)) != len(triggers):
            raise ValidationError("trigger token sets must be pairwise distinct")

    def all_rules(self) -> list[PlantedRule]:
        return list(self.rules) + list(self.decoys)

    def to_dict(self) -> dict:
        return {
            "kind": "planted",
            "rules": [r.to_dict() for r in self.rules],
            "decoys": [r.to_dict() for r in self.decoys],
            "noise_rate": self.noise_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantedWorld":
        return cls(
            rules=[PlantedRule.from_dict(r) for r in d.get("rules", [])],
            decoys=[PlantedRule.from_dict(r) for r in d.get("decoys", [])],
            noise_rate=float(d.get("noise_rate", 0.0)),
            seed=int(d.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PlantedWorld":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class PlantedDiscriminator:
    def __init__(self, world: PlantedWorld):
        self.world = world

    def check(self, scene: str, question: str) -> str:
        if self.world.noise_rate > 0:
            if _stable_unit(self.world.seed, "check", scene, question) < self.world.noise_rate:
                return UNKNOWN
        required = _question_tokens(question)
        if not required:
            return UNKNOWN
        return TRUE if required <= _tokens(scene) else FALSE


def _question_tokens(question: str) -> set[str]:
    body = question[len(QUESTION_PREFIX):] if question.startswith(QUESTION_PREFIX) else question
    return {t for t in (part.strip() for part in body.split(",")) if t} & _tokens(body)


class PlantedNliJudge:
    def __init__(self, world: PlantedWorld):
        self.world = world
        self._by_behavior = {r.behavior_token: r for r in world.all_rules()}

    def judge(self, premise: str, hypothesis: str) -> str:
        premise_tokens = _tokens(premise)
        if hypothesis.startswith(STATEMENT_PREFIX):
            behavior = hypothesis[len(STATEMENT_PREFIX):].strip()
            rule = self._by_behavior.get(behavior)
            if behavior in premise_tokens:
                return ENTAILED
            if rule is not None and rule.contradiction_token in premise_tokens:
                return CONTRADICTED
            return NEUTRAL
        # free-text hypothesis (used when scoring predictions against references)
        hyp_tokens = _tokens(hypothesis)
        for rule in self.world.all_rules():
            pair = {rule.behavior_token, rule.contradiction_token}
            if pair <= (premise_tokens | hyp_tokens) and not pair <= premise_tokens and not pair <= hyp_tokens:
                return CONTRADICTED
        if premise.strip() == hypothesis.strip():
            return ENTAILED
        if hyp_tokens and hyp_tokens <= premise_tokens:
            return ENTAILED
        if any(r.behavior_token in premise_tokens and r.behavior_token in hyp_tokens for r in self.world.all_rules()):
            return ENTAILED
        return NEUTRAL


class PlantedHypothesizer:
    """Proposes rules whose triggers occur in the cluster, by in-cluster support.

    Honors the diversification contract: rules whose question already lies on
    the branch or whose statement is already established are skipped.
    """

    def __init__(self, world: PlantedWorld):
        self.world = world
        self.calls: list[dict] = []

    def propose(
        self,
        cluster: Sequence[SceneActionPair],
        character: str,
        question_path: Sequence[str],
        established: Sequence[str],
        n: int,
        goal_instruction: str | None = None,
    ) -> list[Hypothesis]:
        self.calls.append(
            {
                "cluster_size": len(cluster),
                "character": character,
                "question_path": list(question_path),
                "established": list(established),
                "n": n,
                "goal_instruction": goal_instruction,
            }
        )
        scene_tokens = [_tokens(render_scene(p.scene)) for p in cluster]
        ranked: list[tuple[int, int, PlantedRule]] = []
        for order, rule in enumerate(self.world.all_rules()):
            if rule.question() in question_path or rule.statement() in established:
                continue
            support = sum(1 for toks in scene_tokens if set(rule.trigger_tokens) <= toks)
            if support > 0:
                ranked.append((-support, order, rule))
        ranked.sort()
        return [
            Hypothesis(question=rule.question(), statement=rule.statement())
            for _, _, rule in ranked[:n]
        ]


class PlantedRpGenerator:
    """Echoes the behavior tokens of whatever grounding statements reach the prompt."""

    def __init__(self, world: PlantedWorld):
        self.world = world

    def generate(self, prompt: str) -> str:
        prompt_tokens = _tokens(prompt)
        behaviors = [
            r.behavior_token
            for r in self.world.all_rules()
            if r.behavior_token in prompt_tokens
        ]
        if behaviors:
            return "acts: " + " ".join(behaviors)
        last_line = prompt.strip().splitlines()[-1] if prompt.strip() else ""
        return "continues: " + last_line


class HashEmbedder:
    """Seeded token-hash histogram embedding.

    Token-overlapping texts land closer in cosine distance than disjoint
    ones, which is all the clustering tests need.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def _bucket(self, token: str) -> int:
        digest = hashlib.md5(f"{self.seed}:{token}".encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "big") % self.dim

    def embed_action(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=float)
        for token in _TOKEN_RE.findall(text.lower()):
            vec[self._bucket(token)] += 1.0
        return vec

    def embed_scene(self, scene: str, character: str) -> np.ndarray:
        from .base import SCENE_EMBED_TEMPLATE

        return self.embed_action(SCENE_EMBED_TEMPLATE.format(scene=scene, character=character))


def planted_suite(world: PlantedWorld, dim: int = 64) -> OracleSuite:
    return OracleSuite(
        discriminator=PlantedDiscriminator(world),
        nli=PlantedNliJudge(world),
        hypothesizer=PlantedHypothesizer(world),
        embedder=HashEmbedder(dim=dim, seed=world.seed),
        rp_generator=PlantedRpGenerator(world),
    )


# ---------------------------------------------------------------------------
# synthetic corpus generation

def make_world(
    n_rules: int = 5,
    n_decoys: int = 5,
    seed: int = 0,
    noise_rate: float = 0.0,
) -> PlantedWorld:
    rules = [
        PlantedRule((f"trig{i}a", f"trig{i}b"), f"beh{i}", f"con{i}")
        for i in range(n_rules)
    ]
    decoys = [
        PlantedRule((f"dtrig{j}a", f"dtrig{j}b"), f"dbeh{j}", f"dcon{j}")
        for j in range(n_decoys)
    ]
    return PlantedWorld(rules=rules, decoys=decoys, noise_rate=noise_rate, seed=seed)


_FILLER_ACTORS = ("narrator", "ally", "environment")


def synthesize_pairs(
    world: PlantedWorld,
    pairs_per_rule: int = 20,
    character: str = "hero",
    seed: int | None = None,
    true_entail_range: tuple[float, float] = (0.8, 1.0),
    decoy_entail_range: tuple[float, float] = (0.1, 0.3),
    decoy_contra_rate: float = 0.5,
    leaf_fraction: float = 0.5,
    true_contra_range: tuple[float, float] = (0.0, 0.0),
    nest_fraction: float = 0.0,
    filler_vocab: int = 12,
    scene_len_range: tuple[int, int] = (3, 6),
) -> Corpus:
    """Build a corpus whose pairs realize the planted rules at exact counts.

    True rules get entailment rates inside ``true_entail_range`` within their
    trigger subset; a ``leaf_fraction`` share of them additionally receives
    out-of-subset contradictions so their global accuracy fails while their
    conditional accuracy stays high.  Decoys get low entailment plus in-subset
    contradictions so validation abolishes them.

    ``true_contra_range`` plants in-subset contradictions for true rules
    (pushing conditional accuracy into the mid band, which forces recursion),
    and ``nest_fraction`` makes some rules' scenes carry their predecessor's
    triggers as well, so recursed subsets contain discoverable sub-rules.
    """
    rng = np.random.default_rng(world.seed if seed is None else seed)
    groups: list[tuple[PlantedRule, list[str]]] = []

    def exact_labels(n: int, entailed: int, contradicted: int) -> list[str]:
        labels = ["entail"] * entailed + ["contra"] * contradicted
        labels += ["neutral"] * (n - len(labels))
        rng.shuffle(labels)
        return labels

    n_true = len(world.rules)
    leaf_cut = int(round(leaf_fraction * n_true))
    parent_of: dict[int, int] = {}
    for j in range(1, n_true):
        if rng.random() < nest_fraction:
            parent_of[j] = j - 1

    def trigger_closure(rule_idx: int) -> list[str]:
        tokens, at = [], rule_idx
        while True:
            tokens = list(world.rules[at].trigger_tokens) + tokens
            if at not in parent_of:
                return tokens
            at = parent_of[at]

    out_of_subset: list[tuple[PlantedRule, int]] = []
    for i, rule in enumerate(world.rules):
        rate = rng.uniform(*true_entail_range)
        entailed = int(round(rate * pairs_per_rule))
        contradicted = min(
            int(round(rng.uniform(*true_contra_range) * pairs_per_rule)),
            pairs_per_rule - entailed,
        )
        groups.append((rule, exact_labels(pairs_per_rule, entailed, contradicted)))
        if i < leaf_cut:
            # enough stray contradictions to push global accuracy below 0.75
            out_of_subset.append((rule, max(1, (entailed + 1) // 2)))
    for rule in world.decoys:
        rate = rng.uniform(*decoy_entail_range)
        entailed = int(round(rate * pairs_per_rule))
        contradicted = int(round(decoy_contra_rate * pairs_per_rule))
        groups.append((rule, exact_labels(pairs_per_rule, entailed, contradicted)))

    fillers = [f"amb{k}" for k in range(filler_vocab)]
    triggers_by_rule = {
        id(rule): trigger_closure(i) if i < n_true else list(rule.trigger_tokens)
        for i, (rule, _) in enumerate(groups)
    }

    raw: list[tuple[PlantedRule, str]] = [
        (rule, label) for rule, labels in groups for label in labels
    ]
    order = rng.permutation(len(raw))

    # distribute out-of-subset contradiction tokens over other groups' neutral actions
    extra_tokens: dict[int, list[str]] = {}
    for rule, count in out_of_subset:
        candidates = [
            int(i)
            for i in order
            if raw[int(i)][0] is not rule and raw[int(i)][1] == "neutral"
        ]
        for slot in candidates[:count]:
            extra_tokens.setdefault(slot, []).append(rule.contradiction_token)

    pairs: list[SceneActionPair] = []
    for position, raw_idx in enumerate(order):
        rule, label = raw[int(raw_idx)]
        base = position * 10
        scene_len = int(rng.integers(scene_len_range[0], scene_len_range[1]))
        trigger_slot = int(rng.integers(0, scene_len))
        scene = []
        for s in range(scene_len):
            words = [fillers[int(rng.integers(0, len(fillers)))] for _ in range(2)]
            if s == trigger_slot:
                words = triggers_by_rule[id(rule)] + words[:1]
            scene.append(
                ActionRecord(
                    actor=_FILLER_ACTORS[s % len(_FILLER_ACTORS)],
                    text=" ".join(words),
                    episode="ep0",
                    index=base + s,
                )
            )
        action_words = [str(fillers[int(rng.integers(0, len(fillers)))])]
        if label == "entail":
            action_words.append(rule.behavior_token)
        elif label == "contra":
            action_words.append(rule.contradiction_token)
        action_words.extend(extra_tokens.get(int(raw_idx), []))
        action = ActionRecord(
            actor=character,
            text=" ".join(action_words),
            episode="ep0",
            index=base + 9,
        )
        pairs.append(SceneActionPair(scene=tuple(scene), action=action, character=character))

    return Corpus(character=character, pairs=pairs)


def recovered_statements(tree: CodifiedDecisionTree, world: PlantedWorld) -> tuple[set[str], set[str]]:
    """Accepted statement texts split into (true-rule hits, decoy hits)."""
    accepted = {
        s.text
        for node in tree.nodes.values()
        for s in node.statements
        if s.status == STATUS_ACCEPTED
    }
    true_hits = {r.statement() for r in world.rules} & accepted
    decoy_hits = {r.statement() for r in world.decoys} & accepted
    return true_hits, decoy_hits
