"""Textual profile conversion: if-then linearization and wiki-style rewriting."""

from __future__ import annotations

import re

from .codex import CodifiedDecisionTree, STATUS_ACCEPTED
from .exceptions import ExtractionError
from .templates import load_template


def iter_rules(tree: CodifiedDecisionTree, accepted_only: bool = False):
    """Yield (line, statement) for every statement in pre-order.

    Statements on an unconditioned node read "ALWAYS: h"; anything behind
    questions reads "IF q1 AND q2 THEN h" over the node's full question path.
    """
    for node in tree.walk():
        for statement in node.statements:
            if accepted_only and statement.status != STATUS_ACCEPTED:
                continue
            if node.question_path:
                condition = " AND ".join(node.question_path)
                yield f"IF {condition} THEN {statement.text}", statement
            else:
                yield f"ALWAYS: {statement.text}", statement


def verbalize(tree: CodifiedDecisionTree) -> str:
    """Deterministic one-rule-per-line linearization of the whole tree."""
    return "\n".join(line for line, _ in iter_rules(tree))


_OUTLINE_LINE = re.compile(r"^\s*(?P<title>[^|]+?)\s*\|\s*(?P<keywords>.+?)\s*$")

FALLBACK_CHAPTER = "Other behaviors"


def _parse_outline(raw: str) -> list[tuple[str, list[str]]]:
    chapters = []
    for line in raw.strip().splitlines():
        if not line.strip():
            continue
        match = _OUTLINE_LINE.match(line)
        if not match:
            raise ExtractionError(f"unparseable outline line: {line!r}", raw=raw)
        keywords = [k.strip().lower() for k in match.group("keywords").split(",") if k.strip()]
        chapters.append((match.group("title").strip(), keywords))
    if not chapters:
        raise ExtractionError("outline stage produced no chapters", raw=raw)
    return chapters


def wikify(tree: CodifiedDecisionTree, llm) -> str:
    """Two-stage rewrite: propose a chapter outline from the linearized rules,
    then fill each chapter from its assigned rule subset.

    Rules are routed to the first chapter whose keywords they mention;
    leftovers land in a trailing catch-all chapter so nothing validated is
    dropped.  Abolished statements never enter wikification.
    """
    rules = [line for line, _ in iter_rules(tree, accepted_only=True)]
    title = f"{tree.character} — Behavior Profile"
    if not rules:
        return f"# {title}\n\n## Overview\nNo validated behaviors recorded for {tree.character}.\n"

    rules_text = "\n".join(rules)
    outline_raw = llm.complete(
        load_template("wiki_outline").format(character=tree.character, rules=rules_text)
    )
    chapters = _parse_outline(outline_raw)

    assignment: dict[str, list[str]] = {name: [] for name, _ in chapters}
    assignment[FALLBACK_CHAPTER] = []
    for rule in rules:
        lowered = rule.lower()
        target = FALLBACK_CHAPTER
        for name, keywords in chapters:
            if any(keyword in lowered for keyword in keywords):
                target = name
                break
        assignment[target].append(rule)

    outline_text = "\n".join(name for name, _ in chapters)
    sections = [f"# {title}"]
    for name, _ in chapters + [(FALLBACK_CHAPTER, [])]:
        assigned = assignment[name]
        if not assigned:
            continue
        body = llm.complete(
            load_template("wiki_chapter").format(
                character=tree.character,
                title=name,
                outline=outline_text,
                rules="\n".join(assigned),
            )
        )
        sections.append(f"## {name}\n{body.strip()}")
    return "\n\n".join(sections) + "\n"
