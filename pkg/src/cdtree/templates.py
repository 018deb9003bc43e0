"""Prompt template loading.

Templates are plain text files with named ``str.format`` placeholders,
shipped under ``cdtree/templates/``.  They are tunable operator assets,
not canonical wording.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = resources.files("cdtree").joinpath("templates", f"{name}.txt")
    return path.read_text(encoding="utf-8")
