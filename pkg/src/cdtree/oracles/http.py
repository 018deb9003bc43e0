"""HTTP-backed oracles over OpenAI-compatible chat and embedding endpoints.

Every upstream call is cached by a stable digest of (operation, model,
canonicalized input); the cache persists on disk so re-induction and resumed
jobs are cheap, and per-key locking keeps upstream traffic at-most-once per
key under concurrent use.  Transient failures are retried 3 times with
jittered exponential backoff before surfacing as TransportError.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import httpx
import numpy as np

from ..codex import Hypothesis
from ..corpus import SceneActionPair, render_scene
from ..exceptions import ExtractionError, TransportError
from ..templates import load_template
from .base import (
    OracleSuite,
    SCENE_EMBED_TEMPLATE,
    UNKNOWN,
    parse_nli_label,
    parse_verdict,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "CDTREE_API_KEY"


@dataclass
class HttpOracleConfig:
    base_url: str
    chat_model: str
    embed_model: str = ""
    api_key: str = ""
    api_key_env: str = API_KEY_ENV
    cache_dir: str | None = None
    max_retries: int = 3
    backoff_base: float = 1.0
    timeout: float = 60.0
    parallelism: int = 16
    temperature: float = 0.0

    def resolved_api_key(self) -> str:
        return self.api_key or os.environ.get(self.api_key_env, "")

    @classmethod
    def from_dict(cls, d: dict) -> "HttpOracleConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


class ResponseCache:
    """Thread-safe response cache with optional one-file-per-key persistence."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, str] = {}
        self._guard = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def key_lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._key_locks.setdefault(key, threading.Lock())

    def get(self, key: str) -> str | None:
        with self._guard:
            if key in self._memory:
                return self._memory[key]
        if self.directory:
            path = self._path(key)
            if path.exists():
                value = path.read_text(encoding="utf-8")
                with self._guard:
                    self._memory[key] = value
                return value
        return None

    def put(self, key: str, value: str) -> None:
        with self._guard:
            self._memory[key] = value
        if self.directory:
            path = self._path(key)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(value, encoding="utf-8")
            tmp.replace(path)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"


def cache_key(operation: str, model: str, payload) -> str:
    canonical = json.dumps({"op": operation, "model": model, "input": payload}, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class OpenAiCompatClient:
    def __init__(self, config: HttpOracleConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.cache = ResponseCache(config.cache_dir)
        headers = {"Content-Type": "application/json"}
        api_key = config.resolved_api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )

    def complete(self, prompt: str, system: str | None = None) -> str:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        key = cache_key("chat", self.config.chat_model, messages)
        with self.cache.key_lock(key):
            cached = self.cache.get(key)
            if cached is not None:
                return json.loads(cached)
            body = {
                "model": self.config.chat_model,
                "messages": messages,
                "temperature": self.config.temperature,
            }
            data = self._post("/chat/completions", body)
            try:
                text = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ExtractionError(f"unexpected chat response shape: {exc}", raw=str(data)) from exc
            self.cache.put(key, json.dumps(text))
            return text

    def embed(self, text: str) -> np.ndarray:
        key = cache_key("embed", self.config.embed_model, text)
        with self.cache.key_lock(key):
            cached = self.cache.get(key)
            if cached is not None:
                return np.asarray(json.loads(cached), dtype=float)
            body = {"model": self.config.embed_model, "input": text}
            data = self._post("/embeddings", body)
            try:
                vector = data["data"][0]["embedding"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ExtractionError(f"unexpected embedding response shape: {exc}", raw=str(data)) from exc
            self.cache.put(key, json.dumps(vector))
            return np.asarray(vector, dtype=float)

    def _post(self, path: str, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries):
            try:
                response = self._client.post(path, json=body)
                if response.status_code in (429,) or response.status_code >= 500:
                    raise TransportError(f"upstream status {response.status_code}")
                response.raise_for_status()
                return response.json()
            except (httpx.TransportError, httpx.HTTPStatusError, TransportError) as exc:
                last_error = exc
                if attempt + 1 < self.config.max_retries:
                    delay = self.config.backoff_base * (2**attempt) * (0.5 + random.random())
                    time.sleep(delay)
        raise TransportError(f"request to {path} failed after {self.config.max_retries} attempts: {last_error}")


class HttpDiscriminator:
    def __init__(self, client: OpenAiCompatClient):
        self.client = client

    def check(self, scene: str, question: str) -> str:
        answer = self.client.complete(
            load_template("discrimination").format(scene=scene, question=question)
        )
        verdict = parse_verdict(answer)
        if verdict == UNKNOWN and "unknown" not in answer.lower():
            logger.warning("unmappable discriminator answer treated as Unknown: %r", answer[:120])
        return verdict


class HttpNliJudge:
    def __init__(self, client: OpenAiCompatClient):
        self.client = client

    def judge(self, premise: str, hypothesis: str) -> str:
        answer = self.client.complete(
            load_template("nli").format(premise=premise, hypothesis=hypothesis)
        )
        return parse_nli_label(answer)


class HttpHypothesizer:
    def __init__(self, client: OpenAiCompatClient):
        self.client = client

    def propose(
        self,
        cluster: Sequence[SceneActionPair],
        character: str,
        question_path: Sequence[str],
        established: Sequence[str],
        n: int,
        goal_instruction: str | None = None,
    ) -> list[Hypothesis]:
        rendered = "\n\n".join(
            f"Scene:\n{render_scene(p.scene)}\nAction: {p.action.text}" for p in cluster
        )
        context_block = ""
        if question_path or established:
            context_block = load_template("hypothesis_context").format(
                question_path="\n".join(question_path) or "(none)",
                established="\n".join(established) or "(none)",
            )
        goal_block = f"\nFocus specifically on: {goal_instruction}\n" if goal_instruction else ""
        prompt = load_template("hypothesis").format(
            character=character,
            cluster=rendered,
            context_block=context_block,
            n=n,
            goal_block=goal_block,
        )
        raw = self.client.complete(prompt)
        try:
            items = json.loads(_strip_fence(raw))
            hypotheses = [
                Hypothesis(question=str(item["question"]), statement=str(item["statement"]))
                for item in items
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ExtractionError(f"could not parse hypothesis output: {exc}", raw=raw) from exc
        return hypotheses[:n]


class HttpEmbedder:
    def __init__(self, client: OpenAiCompatClient):
        self.client = client

    def embed_action(self, text: str) -> np.ndarray:
        return self.client.embed(text)

    def embed_scene(self, scene: str, character: str) -> np.ndarray:
        return self.client.embed(SCENE_EMBED_TEMPLATE.format(scene=scene, character=character))


class HttpRpGenerator:
    def __init__(self, client: OpenAiCompatClient):
        self.client = client

    def generate(self, prompt: str) -> str:
        return self.client.complete(prompt)


def http_suite(
    config: HttpOracleConfig, transport: httpx.BaseTransport | None = None
) -> OracleSuite:
    client = OpenAiCompatClient(config, transport=transport)
    return OracleSuite(
        discriminator=HttpDiscriminator(client),
        nli=HttpNliJudge(client),
        hypothesizer=HttpHypothesizer(client),
        embedder=HttpEmbedder(client),
        rp_generator=HttpRpGenerator(client),
    )


def _strip_fence(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        lines = text.splitlines()[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        text = "\n".join(lines)
    return text.strip()
