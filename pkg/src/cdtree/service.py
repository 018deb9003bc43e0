"""Long-running HTTP service: induction jobs, traversal, editing, evaluation.

Trees persist as one document file per revision plus a HEAD pointer, so the
whole store is auditable with a text editor and restarts recover every tree.
Mutations are serialized per tree behind an optimistic revision check;
retries are idempotent under an Idempotency-Key header.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .codex import (
    CodifiedDecisionTree,
    InductionConfig,
    deserialize_tree,
    serialize_tree,
    tree_to_document,
)
from .corpus import load_pairs
from .exceptions import CdtreeError, EditError, ValidationError
from .grounding import DEFAULT_K, DEFAULT_POLICY, TopKPolicy, generate_action, traverse
from .induction import GoalSpec, induce
from .verbalize import verbalize
from . import codex


class TreeStore:
    """One directory per tree; rev-NNNNN.json files plus a HEAD pointer."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "trees").mkdir(parents=True, exist_ok=True)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def tree_dir(self, tree_id: str) -> Path:
        return self.root / "trees" / tree_id

    def list_trees(self) -> list[str]:
        return sorted(p.name for p in (self.root / "trees").iterdir() if p.is_dir())

    def new_tree_id(self) -> str:
        with self._lock:
            existing = self.list_trees()
            n = 0
            while f"t{n:04d}" in existing:
                n += 1
            tree_id = f"t{n:04d}"
            self.tree_dir(tree_id).mkdir(parents=True)
            return tree_id

    def save(self, tree_id: str, tree: CodifiedDecisionTree) -> None:
        directory = self.tree_dir(tree_id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"rev-{tree.revision:05d}.json").write_text(
            serialize_tree(tree), encoding="utf-8"
        )
        head = directory / "HEAD"
        tmp = head.with_suffix(".tmp")
        tmp.write_text(str(tree.revision), encoding="utf-8")
        tmp.replace(head)

    def load(self, tree_id: str) -> CodifiedDecisionTree:
        directory = self.tree_dir(tree_id)
        head = directory / "HEAD"
        if not head.exists():
            raise KeyError(tree_id)
        revision = int(head.read_text(encoding="utf-8").strip())
        return deserialize_tree(
            (directory / f"rev-{revision:05d}.json").read_text(encoding="utf-8")
        )

    def save_job(self, job_id: str, payload: dict) -> None:
        path = self.root / "jobs" / f"{job_id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    def load_job(self, job_id: str) -> dict:
        path = self.root / "jobs" / f"{job_id}.json"
        if not path.exists():
            raise KeyError(job_id)
        return json.loads(path.read_text(encoding="utf-8"))

    def list_jobs(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "jobs").glob("*.json"))


class InductionJobBody(BaseModel):
    pairs_path: str
    config: dict = Field(default_factory=dict)
    goal_related: str | None = None
    goal_instruction: str | None = None


class SceneBody(BaseModel):
    scene: str
    policy: str = DEFAULT_POLICY
    k: int = DEFAULT_K


class EditBody(BaseModel):
    revision: int
    command: dict


class EvaluateBody(BaseModel):
    tree_id: str
    test_path: str
    policy: str = DEFAULT_POLICY
    k: int = DEFAULT_K


def create_app(
    store_path: str | Path,
    oracle_config_path: str | Path | None = None,
    oracles=None,
) -> FastAPI:
    if oracles is None:
        if oracle_config_path is None:
            raise ValueError("create_app needs an oracle suite or a config path")
        from .cli import load_oracle_suite

        oracles = load_oracle_suite(oracle_config_path)

    store = TreeStore(store_path)
    app = FastAPI(title="cdtree service")
    tree_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()
    idempotency: dict[tuple[str, str], Any] = {}
    job_counter = threading.Lock()

    def lock_for(tree_id: str) -> threading.Lock:
        with locks_guard:
            return tree_locks.setdefault(tree_id, threading.Lock())

    def get_tree(tree_id: str) -> CodifiedDecisionTree:
        try:
            return store.load(tree_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown tree {tree_id}")
        except ValidationError as exc:
            raise HTTPException(status_code=500, detail=str(exc))

    def run_job(job_id: str, body: InductionJobBody) -> None:
        from .oracles import RecordingSuite

        job = store.load_job(job_id)
        try:
            recorder = RecordingSuite(oracles)
            corpus = load_pairs(body.pairs_path)
            config = InductionConfig.from_dict(body.config)
            goal = None
            if body.goal_related:
                goal = GoalSpec(
                    related=body.goal_related,
                    instruction=body.goal_instruction or f"interactions with {body.goal_related}",
                )

            def progress(nodes_grown: int, calls: int) -> None:
                job["progress"] = {"nodes_grown": nodes_grown, "oracle_calls": calls}
                store.save_job(job_id, job)

            checkpoint = store.root / "jobs" / f"{job_id}.checkpoint.json"
            tree, log = induce(
                corpus, config, recorder, goal=goal, checkpoint_path=checkpoint, progress=progress
            )
            tree_id = store.new_tree_id()
            store.save(tree_id, tree)
            log.save(store.tree_dir(tree_id) / "induction-log.jsonl")
            job.update(state="done", tree_id=tree_id)
        except (CdtreeError, ValueError, OSError) as exc:
            job.update(state="failed", error=str(exc))
        store.save_job(job_id, job)

    @app.get("/health")
    def health():
        return {"status": "ok", "trees": store.list_trees()}

    @app.post("/trees", status_code=202)
    def start_induction(body: InductionJobBody, idempotency_key: str | None = Header(default=None)):
        if idempotency_key is not None and ("POST /trees", idempotency_key) in idempotency:
            return idempotency[("POST /trees", idempotency_key)]
        with job_counter:
            job_id = f"j{len(store.list_jobs()):04d}"
            store.save_job(
                job_id,
                {
                    "id": job_id,
                    "state": "queued",
                    "progress": {"nodes_grown": 0, "oracle_calls": 0},
                    "manifest": body.model_dump(),
                },
            )
        # one job at a time per character corpus; distinct characters run in parallel
        character = ""
        try:
            with open(body.pairs_path, encoding="utf-8") as handle:
                first = handle.readline()
                character = json.loads(first).get("character", "") if first.strip() else ""
        except OSError:
            pass
        lock = lock_for(f"induction:{character}")

        def work():
            with lock:
                job = store.load_job(job_id)
                job["state"] = "running"
                store.save_job(job_id, job)
                run_job(job_id, body)

        threading.Thread(target=work, daemon=True).start()
        response = {"job_id": job_id}
        if idempotency_key is not None:
            idempotency[("POST /trees", idempotency_key)] = response
        return response

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return store.load_job(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")

    @app.get("/trees/{tree_id}")
    def read_tree(tree_id: str):
        return tree_to_document(get_tree(tree_id))

    @app.get("/trees/{tree_id}/log")
    def read_log(tree_id: str):
        get_tree(tree_id)
        path = store.tree_dir(tree_id) / "induction-log.jsonl"
        if not path.exists():
            return {"events": []}
        events = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        return {"events": events}

    @app.post("/trees/{tree_id}/traverse")
    def traverse_tree(tree_id: str, body: SceneBody):
        tree = get_tree(tree_id)
        _validated_scene(body)
        try:
            bundle = traverse(tree, body.scene, oracles.discriminator)
        except CdtreeError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return bundle.to_dict()

    @app.post("/trees/{tree_id}/ground")
    def ground_tree(tree_id: str, body: SceneBody):
        tree = get_tree(tree_id)
        _validated_scene(body)
        try:
            policy = TopKPolicy(body.policy, body.k)
            result = generate_action(body.scene, tree, policy, oracles)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except CdtreeError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return {
            "action": result["action"],
            "prompt": result["prompt"],
            "bundle": result["bundle"].to_dict(),
        }

    @app.patch("/trees/{tree_id}/nodes/{node_id}")
    def edit_node(
        tree_id: str,
        node_id: int,
        body: EditBody,
        idempotency_key: str | None = Header(default=None),
    ):
        idem = ("PATCH " + tree_id, idempotency_key) if idempotency_key else None
        if idem and idem in idempotency:
            return idempotency[idem]
        with lock_for(tree_id):
            tree = get_tree(tree_id)
            if body.revision != tree.revision:
                raise HTTPException(
                    status_code=409,
                    detail=f"revision conflict: head is {tree.revision}, got {body.revision}",
                )
            command = dict(body.command)
            command.setdefault("node", node_id)
            command.setdefault("parent", node_id)
            try:
                edited = codex.edit_tree(tree, command)
            except EditError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            store.save(tree_id, edited)
        response = {"revision": edited.revision, "tree": tree_to_document(edited)}
        if idem:
            idempotency[idem] = response
        return response

    @app.get("/trees/{tree_id}/verbalized", response_class=PlainTextResponse)
    def verbalized(tree_id: str):
        return verbalize(get_tree(tree_id))

    @app.post("/evaluate")
    def evaluate(body: EvaluateBody):
        from .evalharness import evaluate_strategy, make_cdt_strategy

        tree = get_tree(body.tree_id)
        try:
            test = load_pairs(body.test_path)
            policy = TopKPolicy(body.policy, body.k)
            result = evaluate_strategy(
                make_cdt_strategy(tree, policy, oracles), test, oracles.nli, "cdt",
                config_snapshot={"policy": body.policy, "k": body.k},
            )
        except (CdtreeError, ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return result.to_dict()

    def _validated_scene(body: SceneBody) -> None:
        if not body.scene.strip():
            raise HTTPException(status_code=400, detail="scene must be non-empty")
        if body.policy not in ("depth_rank", "accuracy_rank", "usability_rank"):
            raise HTTPException(status_code=400, detail=f"unknown policy {body.policy!r}")
        if body.k < 1:
            raise HTTPException(status_code=400, detail="k must be at least 1")

    return app
