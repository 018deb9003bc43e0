"""NLI-scored next-action prediction and baseline grounding strategies.

Every prediction is judged against the reference action: entailed scores 100,
neutral 50, contradicted 0.  Failed pairs are excluded from the mean but
reported as coverage, never imputed.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .codex import CodifiedDecisionTree
from .corpus import Corpus, SceneActionPair, render_scene
from .grounding import TopKPolicy, generate_action, vanilla_prompt
from .oracles.base import CONTRADICTED, ENTAILED, NEUTRAL
from .templates import load_template

logger = logging.getLogger(__name__)

SCORE_BY_LABEL = {ENTAILED: 100, NEUTRAL: 50, CONTRADICTED: 0}

Strategy = Callable[[SceneActionPair], str]


def nli_score(reference: str, prediction: str, nli) -> dict:
    """Judge prediction against reference and map the label onto 0/50/100."""
    if not reference.strip() or not prediction.strip():
        raise ValueError("reference and prediction must be non-empty")
    label = nli.judge(reference, prediction)
    return {"label": label, "score": SCORE_BY_LABEL[label]}


def pair_digest(pair: SceneActionPair) -> str:
    return hashlib.sha256(
        json.dumps(pair.to_dict(), sort_keys=True).encode("utf-8")
    ).hexdigest()[:20]


@dataclass
class EvalResult:
    strategy: str
    character: str
    per_pair: list[dict] = field(default_factory=list)
    mean: float = 0.0
    coverage: float = 1.0
    config_snapshot: dict = field(default_factory=dict)

    @property
    def pair_count(self) -> int:
        return len(self.per_pair)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "character": self.character,
            "mean": self.mean,
            "coverage": self.coverage,
            "pair_count": self.pair_count,
            "per_pair": self.per_pair,
            "config_snapshot": self.config_snapshot,
        }


def evaluate_strategy(
    strategy: Strategy,
    test: Corpus,
    nli,
    tag: str,
    cache: dict[tuple[str, str], str] | None = None,
    config_snapshot: dict | None = None,
) -> EvalResult:
    """Generate one prediction per test pair and aggregate the NLI scores.

    Predictions are cached by (strategy tag, pair digest); per-pair failures
    are recorded and excluded from the mean with a coverage warning.
    """
    if not test.pairs:
        raise ValueError("empty test set")
    result = EvalResult(strategy=tag, character=test.character, config_snapshot=config_snapshot or {})
    scores = []
    for pair in test.pairs:
        key = (tag, pair_digest(pair))
        entry: dict = {"pair": key[1]}
        try:
            if cache is not None and key in cache:
                prediction = cache[key]
            else:
                prediction = strategy(pair)
                if cache is not None:
                    cache[key] = prediction
            judged = nli_score(pair.action.text, prediction, nli)
            entry.update(prediction=prediction, **judged)
            scores.append(judged["score"])
        except Exception as exc:  # noqa: BLE001 - per-pair isolation is the contract
            entry.update(error=str(exc))
        result.per_pair.append(entry)
    result.coverage = len(scores) / len(test.pairs)
    if result.coverage < 1.0:
        logger.warning(
            "strategy %s covered %.0f%% of pairs; failures excluded from mean",
            tag,
            100 * result.coverage,
        )
    result.mean = float(np.mean(scores)) if scores else 0.0
    return result


# ---------------------------------------------------------------------------
# retrieval baseline

def ricl_ground(
    scene: Sequence,
    train: Corpus,
    embedder,
    m: int = 8,
) -> list[SceneActionPair]:
    """Top-m training pairs by cosine similarity of scene embeddings,
    descending; exact ties resolve to earlier storyline order."""
    if not train.pairs:
        raise ValueError("training corpus must be non-empty")
    query = np.asarray(embedder.embed_action(render_scene(scene)), dtype=float)
    sims = []
    for pair in train.pairs:
        vector = np.asarray(embedder.embed_action(render_scene(pair.scene)), dtype=float)
        sims.append(_cosine(query, vector))
    order = sorted(range(len(train.pairs)), key=lambda i: -sims[i])
    return [train.pairs[i] for i in order[:m]]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    return float(a @ b) / denom if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# extract-then-aggregate baseline

def eta_profile(train: Corpus, llm, block: int = 16) -> str:
    """Extract one sub-profile per consecutive block of training pairs, then
    aggregate all sub-profiles into a single profile text."""
    if not train.pairs:
        raise ValueError("training corpus must be non-empty")
    subprofiles = []
    for start in range(0, len(train.pairs), block):
        chunk = train.pairs[start : start + block]
        rendered = "\n\n".join(
            f"Scene:\n{render_scene(p.scene)}\nAction: {p.action.text}" for p in chunk
        )
        subprofiles.append(
            llm.complete(load_template("eta_extract").format(character=train.character, block=rendered))
        )
    return llm.complete(
        load_template("eta_aggregate").format(
            character=train.character, subprofiles="\n\n".join(subprofiles)
        )
    )


# ---------------------------------------------------------------------------
# strategy constructors

def make_vanilla_strategy(character: str, rp_generator) -> Strategy:
    def predict(pair: SceneActionPair) -> str:
        return rp_generator.generate(vanilla_prompt(render_scene(pair.scene), character))

    return predict


def make_profile_strategy(character: str, profile_text: str, rp_generator) -> Strategy:
    """Static grounding with an operator-supplied profile, loaded verbatim."""

    def predict(pair: SceneActionPair) -> str:
        block = load_template("rp_profile_block").format(character=character, profile=profile_text)
        prompt = load_template("rp_generation").format(
            character=character, grounding_block=block, scene=render_scene(pair.scene)
        )
        return rp_generator.generate(prompt)

    return predict


def make_ricl_strategy(train: Corpus, embedder, rp_generator, m: int = 8) -> Strategy:
    def predict(pair: SceneActionPair) -> str:
        examples = ricl_ground(pair.scene, train, embedder, m=m)
        rendered = "\n\n".join(
            f"Scene:\n{render_scene(p.scene)}\nAction: {p.action.text}" for p in examples
        )
        block = load_template("rp_examples_block").format(character=train.character, examples=rendered)
        prompt = load_template("rp_generation").format(
            character=train.character, grounding_block=block, scene=render_scene(pair.scene)
        )
        return rp_generator.generate(prompt)

    return predict


def make_cdt_strategy(tree: CodifiedDecisionTree, policy: TopKPolicy, oracles) -> Strategy:
    def predict(pair: SceneActionPair) -> str:
        return generate_action(render_scene(pair.scene), tree, policy, oracles)["action"]

    return predict


def make_routed_cdt_strategy(
    general: CodifiedDecisionTree,
    relation_trees: dict[str, CodifiedDecisionTree],
    policy: TopKPolicy,
    oracles,
) -> Strategy:
    from .grounding import route

    def predict(pair: SceneActionPair) -> str:
        tree = route(pair.scene, general, relation_trees)
        return generate_action(render_scene(pair.scene), tree, policy, oracles)["action"]

    return predict
