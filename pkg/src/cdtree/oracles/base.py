"""Model-facing interfaces: verdicts, labels, the oracle suite, call logging.

Every oracle is a total function over valid inputs; provider failures surface
as TransportError, malformed responses as ExtractionError, never as crashes
inside the engine.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from ..codex import Hypothesis
from ..corpus import SceneActionPair

TRUE = "True"
FALSE = "False"
UNKNOWN = "Unknown"
CHECK_VERDICTS = (TRUE, FALSE, UNKNOWN)

ENTAILED = "entailed"
NEUTRAL = "neutral"
CONTRADICTED = "contradicted"
NLI_LABELS = (ENTAILED, NEUTRAL, CONTRADICTED)

SCENE_EMBED_TEMPLATE = "{scene} Thus, {character} decides to"


class Discriminator(Protocol):
    def check(self, scene: str, question: str) -> str: ...


class NliJudge(Protocol):
    def judge(self, premise: str, hypothesis: str) -> str: ...


class Hypothesizer(Protocol):
    def propose(
        self,
        cluster: Sequence[SceneActionPair],
        character: str,
        question_path: Sequence[str],
        established: Sequence[str],
        n: int,
        goal_instruction: str | None = None,
    ) -> list[Hypothesis]: ...


class Embedder(Protocol):
    def embed_action(self, text: str) -> np.ndarray: ...

    def embed_scene(self, scene: str, character: str) -> np.ndarray: ...


class RpGenerator(Protocol):
    def generate(self, prompt: str) -> str: ...


@dataclass
class OracleSuite:
    discriminator: Discriminator
    nli: NliJudge
    hypothesizer: Hypothesizer
    embedder: Embedder
    rp_generator: RpGenerator


# ---------------------------------------------------------------------------
# verdict parsing (total: every string maps to exactly one label)

_VERDICT_PATTERNS = [
    (re.compile(r"\b(true|yes)\b"), TRUE),
    (re.compile(r"\b(false|no)\b"), FALSE),
    (re.compile(r"\b(unknown|none|unclear|cannot|undetermined)\b"), UNKNOWN),
]

_NLI_PATTERNS = [
    (re.compile(r"\bentail(s|ed|ment)?\b"), ENTAILED),
    (re.compile(r"\bcontradict(s|ed|ion|ory)?\b"), CONTRADICTED),
    (re.compile(r"\bneutral\b"), NEUTRAL),
]


def _earliest_match(text: str, patterns) -> str | None:
    lowered = text.lower()
    best_pos, best_label = None, None
    for pattern, label in patterns:
        m = pattern.search(lowered)
        if m and (best_pos is None or m.start() < best_pos):
            best_pos, best_label = m.start(), label
    return best_label


def parse_verdict(text: str) -> str:
    """Map any model answer to True/False/Unknown; earliest keyword wins."""
    return _earliest_match(text, _VERDICT_PATTERNS) or UNKNOWN


def parse_nli_label(text: str) -> str:
    """Map any model answer to entailed/neutral/contradicted."""
    return _earliest_match(text, _NLI_PATTERNS) or NEUTRAL


# ---------------------------------------------------------------------------
# call recording and distillation export

@dataclass(frozen=True)
class CallRecord:
    operation: str  # "check" or "nli"
    premise: str
    hypothesis: str
    label: str

    def to_dict(self) -> dict:
        return {
            "operation": self.operation,
            "premise": self.premise,
            "hypothesis": self.hypothesis,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CallRecord":
        return cls(d.get("operation", "nli"), d["premise"], d["hypothesis"], d["label"])


class RecordingSuite(OracleSuite):
    """Wraps a suite, recording discrimination/NLI calls and counting totals.

    Safe under the engine's bounded-parallel validation calls.
    """

    def __init__(self, inner: OracleSuite):
        self.inner = inner
        self.records: list[CallRecord] = []
        self.call_count = 0
        self._count_lock = threading.Lock()
        super().__init__(
            discriminator=self,
            nli=self,
            hypothesizer=_CountingHypothesizer(self),
            embedder=_CountingEmbedder(self),
            rp_generator=_CountingGenerator(self),
        )

    def _bump(self) -> None:
        with self._count_lock:
            self.call_count += 1

    def check(self, scene: str, question: str) -> str:
        self._bump()
        verdict = self.inner.discriminator.check(scene, question)
        self.records.append(CallRecord("check", scene, question, verdict))
        return verdict

    def judge(self, premise: str, hypothesis: str) -> str:
        self._bump()
        label = self.inner.nli.judge(premise, hypothesis)
        self.records.append(CallRecord("nli", premise, hypothesis, label))
        return label


class _CountingHypothesizer:
    def __init__(self, owner: RecordingSuite):
        self._owner = owner

    def propose(self, *args, **kwargs):
        self._owner._bump()
        return self._owner.inner.hypothesizer.propose(*args, **kwargs)


class _CountingEmbedder:
    def __init__(self, owner: RecordingSuite):
        self._owner = owner

    def embed_action(self, text: str) -> np.ndarray:
        self._owner._bump()
        return self._owner.inner.embedder.embed_action(text)

    def embed_scene(self, scene: str, character: str) -> np.ndarray:
        self._owner._bump()
        return self._owner.inner.embedder.embed_scene(scene, character)


class _CountingGenerator:
    def __init__(self, owner: RecordingSuite):
        self._owner = owner

    def generate(self, prompt: str) -> str:
        self._owner._bump()
        return self._owner.inner.rp_generator.generate(prompt)


def save_call_log(path: str | Path, records: Iterable[CallRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def load_call_log(path: str | Path) -> list[CallRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(CallRecord.from_dict(json.loads(line)))
    return records


def export_distillation_set(
    records: Sequence[CallRecord],
    fraction: float = 0.01,
    seed: int = 0,
) -> list[CallRecord]:
    """Seeded uniform sample of round(fraction*N) records, stratified by label.

    Stratum quotas follow largest-remainder allocation so the total is exact;
    sampled records keep their original log order.  fraction >= 1 returns the
    whole log unchanged.
    """
    if not records:
        return []
    if fraction >= 1.0:
        return list(records)
    if fraction <= 0.0:
        return []
    total = int(round(fraction * len(records)))
    if total == 0:
        return []

    by_label: dict[str, list[int]] = {}
    for i, record in enumerate(records):
        by_label.setdefault(record.label, []).append(i)

    labels = list(by_label)
    exact = {label: fraction * len(by_label[label]) for label in labels}
    quota = {label: int(exact[label]) for label in labels}
    leftover = total - sum(quota.values())
    for label in sorted(labels, key=lambda l: (-(exact[l] - quota[l]), labels.index(l))):
        if leftover <= 0:
            break
        if quota[label] < len(by_label[label]):
            quota[label] += 1
            leftover -= 1

    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for label in labels:
        pool = by_label[label]
        take = min(quota[label], len(pool))
        if take:
            picks = rng.choice(len(pool), size=take, replace=False)
            chosen.extend(pool[int(p)] for p in picks)
    return [records[i] for i in sorted(chosen)]
