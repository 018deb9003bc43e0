"""Scene-action corpora: loading, pair construction, splitting, filtering.

On-disk formats are UTF-8 line-delimited JSON.  A storyline file holds one
action per line (``actor``, ``text``, optional ``episode``, optional
``index``); a pair file holds one scene-action pair per line (``character``,
``scene``, ``action``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .exceptions import ExtractionError, ParseError, ValidationError

ENVIRONMENT_ACTOR = "environment"
DEFAULT_WINDOW = 10

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
SPLIT_UNSPLIT = "unsplit"


@dataclass(frozen=True)
class ActionRecord:
    actor: str
    text: str
    episode: str = ""
    index: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("action text must be non-empty")
        if not self.actor.strip():
            raise ValidationError("action actor must be non-empty")
        if self.index < 0:
            raise ValidationError("action index must be non-negative")

    def to_dict(self) -> dict:
        return {"actor": self.actor, "text": self.text, "episode": self.episode, "index": self.index}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionRecord":
        return cls(
            actor=str(d["actor"]),
            text=str(d["text"]),
            episode=str(d.get("episode", "")),
            index=int(d.get("index", 0)),
        )


@dataclass(frozen=True)
class SceneActionPair:
    scene: tuple[ActionRecord, ...]
    action: ActionRecord
    character: str

    def __post_init__(self):
        if self.action.actor != self.character:
            raise ValidationError("pair action must be performed by the pair's character")
        for record in self.scene:
            if record.index >= self.action.index:
                raise ValidationError("scene records must precede the action in storyline order")

    def to_dict(self) -> dict:
        return {
            "character": self.character,
            "scene": [r.to_dict() for r in self.scene],
            "action": self.action.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneActionPair":
        return cls(
            scene=tuple(ActionRecord.from_dict(r) for r in d.get("scene", [])),
            action=ActionRecord.from_dict(d["action"]),
            character=str(d["character"]),
        )


@dataclass
class Corpus:
    character: str
    pairs: list[SceneActionPair] = field(default_factory=list)
    split_tag: str = SPLIT_UNSPLIT

    def __len__(self) -> int:
        return len(self.pairs)


def render_scene(scene: Iterable[ActionRecord]) -> str:
    """Render a scene window as "Actor: text" lines, newest last.

    The same rendering is used for trigger filtering during induction and
    for discriminator checks at inference time.
    """
    return "\n".join(f"{r.actor}: {r.text}" for r in scene)


# ---------------------------------------------------------------------------
# storyline loading

def load_storyline(path: str | Path) -> list[ActionRecord]:
    """Load a line-delimited storyline file, assigning line-order indices when
    the records carry none.  Explicit and implicit indexing cannot be mixed."""
    records: list[ActionRecord] = []
    explicit: set[bool] = set()
    last_index: int | None = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", line=lineno) from exc
            if not isinstance(raw, dict) or "actor" not in raw or "text" not in raw:
                raise ParseError("record must be an object with 'actor' and 'text'", line=lineno)
            has_index = "index" in raw and raw["index"] is not None
            explicit.add(has_index)
            if len(explicit) > 1:
                raise ValidationError("explicit and implicit indexing cannot be mixed in one file")
            index = int(raw["index"]) if has_index else len(records)
            try:
                record = ActionRecord(
                    actor=str(raw["actor"]),
                    text=str(raw["text"]),
                    episode=str(raw.get("episode", "")),
                    index=index,
                )
            except ValidationError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if last_index is not None:
                if record.index == last_index:
                    raise ValidationError(f"duplicate index {record.index}")
                if record.index < last_index:
                    raise ValidationError(
                        f"indices must be strictly increasing (saw {record.index} after {last_index})"
                    )
            last_index = record.index
            records.append(record)
    return records


def save_storyline(path: str | Path, records: Iterable[ActionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def load_pairs(path: str | Path) -> Corpus:
    pairs: list[SceneActionPair] = []
    character = ""
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                pair = SceneActionPair.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed pair record: {exc}", line=lineno) from exc
            if character and pair.character != character:
                raise ValidationError("all pairs in one file must share the same character")
            character = pair.character
            pairs.append(pair)
    return Corpus(character=character, pairs=pairs)


def save_pairs(path: str | Path, corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in corpus.pairs:
            handle.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# pair construction and splitting

def build_pairs(
    actions: list[ActionRecord],
    character: str,
    window: int = DEFAULT_WINDOW,
) -> list[SceneActionPair]:
    """One pair per action taken by ``character``; the scene is the window of
    immediately preceding actions by any actor, including "environment"."""
    if window < 1:
        raise ValueError("window must be a positive integer")
    pairs = []
    for position, action in enumerate(actions):
        if action.actor != character:
            continue
        scene = tuple(actions[max(0, position - window):position])
        pairs.append(SceneActionPair(scene=scene, action=action, character=character))
    return pairs


def chronological_split(pairs: list[SceneActionPair], ratio: float = 0.5) -> tuple[Corpus, Corpus]:
    """Train on the earliest ceil(ratio*N) pairs, test on the remainder."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must be strictly between 0 and 1")
    character = pairs[0].character if pairs else ""
    cut = math.ceil(ratio * len(pairs))
    train = Corpus(character=character, pairs=list(pairs[:cut]), split_tag=SPLIT_TRAIN)
    test = Corpus(character=character, pairs=list(pairs[cut:]), split_tag=SPLIT_TEST)
    return train, test


def filter_relation_subset(pairs: list[SceneActionPair], related: str) -> list[SceneActionPair]:
    """Keep exactly the pairs whose latest scene action is by ``related``."""
    return [p for p in pairs if p.scene and p.scene[-1].actor == related]


# ---------------------------------------------------------------------------
# narration segmentation

def extract_actions(narration: str, character_roster: list[str], llm) -> list[ActionRecord]:
    """Break a narration into an ordered action sequence with an LLM.

    The model is asked for a JSON array of {actor, text} objects; actors
    outside the roster are attributed to "environment".
    """
    if not narration.strip():
        raise ValueError("narration must be non-empty")
    from .templates import load_template

    prompt = load_template("extraction").format(
        narration=narration,
        roster=", ".join(character_roster) if character_roster else ENVIRONMENT_ACTOR,
    )
    raw = llm.complete(prompt)
    try:
        items = json.loads(_strip_code_fence(raw))
        if not isinstance(items, list):
            raise ValueError("expected a JSON array")
        records = []
        for i, item in enumerate(items):
            actor = str(item["actor"]).strip()
            if actor not in character_roster:
                actor = ENVIRONMENT_ACTOR
            records.append(ActionRecord(actor=actor, text=str(item["text"]), index=i))
    except (ValueError, KeyError, TypeError, ValidationError) as exc:
        raise ExtractionError(f"could not parse extracted actions: {exc}", raw=raw) from exc
    return records


def _strip_code_fence(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        lines = lines[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        text = "\n".join(lines)
    return text.strip()
