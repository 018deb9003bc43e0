"""Operator command line.

Every subcommand maps onto one library operation; configuration comes from a
file with flag overrides; operational failures exit 1 with one machine-
parseable error line on stderr, usage errors exit 2.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import yaml

from .codex import InductionConfig, deserialize_tree, serialize_tree
from .corpus import Corpus, build_pairs, load_pairs, load_storyline, save_pairs
from .evalharness import (
    evaluate_strategy,
    eta_profile,
    make_cdt_strategy,
    make_profile_strategy,
    make_ricl_strategy,
    make_vanilla_strategy,
)
from .exceptions import CdtreeError, ValidationError
from .grounding import DEFAULT_K, DEFAULT_POLICY, POLICIES, TopKPolicy, generate_action, traverse
from .induction import GoalSpec, induce
from .oracles import (
    HttpOracleConfig,
    PlantedWorld,
    RecordingSuite,
    export_distillation_set,
    http_suite,
    load_call_log,
    make_world,
    planted_suite,
    save_call_log,
    synthesize_pairs,
)
from .report import write_report
from .verbalize import verbalize, wikify


def _load_structured(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        return yaml.safe_load(text) or {}
    return json.loads(text)


def build_oracle_suite(spec: dict):
    kind = spec.get("kind", "planted")
    if kind == "planted":
        return planted_suite(PlantedWorld.from_dict(spec))
    if kind == "http":
        return http_suite(HttpOracleConfig.from_dict(spec))
    raise ValidationError(f"unknown oracle kind {kind!r}")


def load_oracle_suite(path: str | Path):
    """Build an oracle suite from a config file.

    ``kind: planted`` files double as planted-world definitions;
    ``kind: http`` files configure an OpenAI-compatible backend.
    """
    return build_oracle_suite(_load_structured(path))


def _default_workers(oracle_spec: dict) -> int:
    # HTTP backends default to their configured in-flight bound; the planted
    # testkit is in-process, so serial keeps call logs ordered.
    if oracle_spec.get("kind") == "http":
        return int(oracle_spec.get("parallelism", 16))
    return 1


def _load_induction_config(
    config_path: str | None, overrides: dict, base: dict | None = None
) -> InductionConfig:
    merged = dict(base or {})
    if config_path:
        merged.update(_load_structured(config_path))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return InductionConfig.from_dict(merged)
    except ValidationError as exc:
        raise click.UsageError(str(exc)) from exc


def _read_scene(scene_path: str) -> str:
    """Raw scene text, or a storyline-format JSONL rendered "Actor: text"."""
    path = Path(scene_path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        return "\n".join(f"{r['actor']}: {r['text']}" for r in records)
    return text.strip()


def operational(fn):
    """Map toolkit errors to exit 1 with a single machine-parseable line."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (CdtreeError, OSError, ValueError) as exc:
            click.echo(json.dumps({"error": str(exc)}), err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Codified decision-tree profiling toolkit."""


@main.command("induce")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), help="induction job manifest (YAML/JSON)")
@click.option("--pairs", "--corpus", "pairs_path", type=click.Path(exists=True), help="pair-format corpus file")
@click.option("--storyline", type=click.Path(exists=True), help="storyline file (needs --character)")
@click.option("--character", default=None, help="target character for --storyline input")
@click.option("--window", default=10, show_default=True)
@click.option("--oracles", "oracle_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, help="tree document path [default: tree.json]")
@click.option("--log", "log_path", default=None, help="write induction events (JSONL)")
@click.option("--calls-log", default=None, help="record oracle calls for distillation (JSONL)")
@click.option("--checkpoint", default=None, help="flush partial tree/log here after each node")
@click.option("--workers", type=int, default=None, help="bounded in-flight oracle calls per validation")
@click.option("--goal-related", default=None, help="related character for a goal-driven tree")
@click.option("--goal-instruction", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--d-max", type=int, default=None)
@click.option("--theta-acc", type=float, default=None)
@click.option("--theta-rej", type=float, default=None)
@click.option("--theta-f", type=float, default=None)
@click.option("--min-node-data", type=int, default=None)
@click.option("--boosted-budget", type=int, default=None)
@click.option("--keep-abolished", is_flag=True, default=None)
@click.option("--no-diversification", "diversification", flag_value=False, default=None)
@click.option("--no-clustering", "clustering_enabled", flag_value=False, default=None)
@click.option("--no-instruction-embedding", "instruction_embedding", flag_value=False, default=None)
@operational
def induce_cmd(
    manifest_path,
    pairs_path,
    storyline,
    character,
    window,
    oracle_path,
    config_path,
    out_path,
    log_path,
    calls_log,
    checkpoint,
    workers,
    goal_related,
    goal_instruction,
    **overrides,
):
    """Grow a tree from a training corpus.

    All inputs can come from a job manifest file; explicit flags override
    manifest entries.
    """
    manifest = _load_structured(manifest_path) if manifest_path else {}
    goal_spec = manifest.get("goal") or {}
    pairs_path = pairs_path or manifest.get("pairs")
    storyline = storyline or manifest.get("storyline")
    character = character or manifest.get("character")
    oracle_path = oracle_path or manifest.get("oracles")
    out_path = out_path or manifest.get("out") or "tree.json"
    log_path = log_path or manifest.get("log")
    calls_log = calls_log or manifest.get("calls_log")
    checkpoint = checkpoint or manifest.get("checkpoint")
    goal_related = goal_related or goal_spec.get("related")
    goal_instruction = goal_instruction or goal_spec.get("instruction")

    config = _load_induction_config(config_path, overrides, base=manifest.get("config"))
    if not oracle_path:
        raise click.UsageError("provide --oracles (or an 'oracles' manifest entry)")
    if pairs_path:
        corpus = load_pairs(pairs_path)
    elif storyline and character:
        actions = load_storyline(storyline)
        corpus = Corpus(character=character, pairs=build_pairs(actions, character, window))
    else:
        raise click.UsageError("provide --pairs, or --storyline with --character")

    oracle_spec = _load_structured(oracle_path)
    workers = workers or manifest.get("workers") or _default_workers(oracle_spec)
    suite = build_oracle_suite(oracle_spec)
    recorder = RecordingSuite(suite) if calls_log else None
    goal = None
    if goal_related:
        goal = GoalSpec(related=goal_related, instruction=goal_instruction or f"interactions with {goal_related}")
    tree, log = induce(
        corpus,
        config,
        recorder or suite,
        goal=goal,
        checkpoint_path=checkpoint,
        workers=workers,
    )
    Path(out_path).write_text(serialize_tree(tree), encoding="utf-8")
    if log_path:
        log.save(log_path)
    if calls_log:
        save_call_log(calls_log, recorder.records)
    click.echo(
        json.dumps(
            {
                "tree": out_path,
                "nodes": len(tree.nodes),
                "statements": tree.statement_count(),
                "max_depth": tree.max_depth(),
            }
        )
    )


@main.command("traverse")
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--oracles", "oracle_path", required=True, type=click.Path(exists=True))
@operational
def traverse_cmd(tree_path, scene_path, oracle_path):
    """Traverse a tree for a scene and print the grounding bundle."""
    tree = deserialize_tree(Path(tree_path).read_text(encoding="utf-8"))
    suite = load_oracle_suite(oracle_path)
    bundle = traverse(tree, _read_scene(scene_path), suite.discriminator)
    click.echo(json.dumps(bundle.to_dict(), indent=2, sort_keys=True))


@main.command("ground")
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--oracles", "oracle_path", required=True, type=click.Path(exists=True))
@click.option("--policy", type=click.Choice(POLICIES), default=DEFAULT_POLICY, show_default=True)
@click.option("--k", type=int, default=DEFAULT_K, show_default=True)
@operational
def ground_cmd(tree_path, scene_path, oracle_path, policy, k):
    """Generate the next action for a scene, with full audit intermediates."""
    tree = deserialize_tree(Path(tree_path).read_text(encoding="utf-8"))
    suite = load_oracle_suite(oracle_path)
    result = generate_action(_read_scene(scene_path), tree, TopKPolicy(policy, k), suite)
    click.echo(
        json.dumps(
            {
                "action": result["action"],
                "prompt": result["prompt"],
                "bundle": result["bundle"].to_dict(),
            },
            indent=2,
            sort_keys=True,
        )
    )


@main.command("verbalize")
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@operational
def verbalize_cmd(tree_path):
    """Print the tree as one if-then rule per line."""
    tree = deserialize_tree(Path(tree_path).read_text(encoding="utf-8"))
    click.echo(verbalize(tree))


@main.command("wikify")
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--oracles", "oracle_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None)
@operational
def wikify_cmd(tree_path, oracle_path, out_path):
    """Rewrite the tree into a wiki-style profile document."""
    tree = deserialize_tree(Path(tree_path).read_text(encoding="utf-8"))
    spec = _load_structured(oracle_path)
    if spec.get("kind") == "http":
        from .oracles.http import OpenAiCompatClient

        llm = OpenAiCompatClient(HttpOracleConfig.from_dict(spec))
    else:
        suite = load_oracle_suite(oracle_path)
        llm = _GeneratorAsClient(suite.rp_generator)
    document = wikify(tree, llm)
    if out_path:
        Path(out_path).write_text(document, encoding="utf-8")
        click.echo(json.dumps({"wiki": out_path}))
    else:
        click.echo(document)


class _GeneratorAsClient:
    def __init__(self, generator):
        self.generator = generator

    def complete(self, prompt: str) -> str:
        return self.generator.generate(prompt)


@main.command("export-distill")
@click.option("--calls-log", required=True, type=click.Path(exists=True))
@click.option("--fraction", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True)
@operational
def export_distill_cmd(calls_log, fraction, seed, out_path):
    """Sample recorded oracle calls into a distillation training set."""
    records = load_call_log(calls_log)
    sample = export_distillation_set(records, fraction=fraction, seed=seed)
    save_call_log(out_path, sample)
    click.echo(json.dumps({"exported": len(sample), "source": len(records)}))


@main.command("gen-synthetic")
@click.option("--out-dir", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rules", "n_rules", type=int, default=5, show_default=True)
@click.option("--decoys", "n_decoys", type=int, default=5, show_default=True)
@click.option("--pairs-per-rule", type=int, default=20, show_default=True)
@click.option("--noise-rate", type=float, default=0.0, show_default=True)
@click.option("--character", default="hero", show_default=True)
@click.option("--nest-fraction", type=float, default=0.0, show_default=True)
@operational
def gen_synthetic_cmd(out_dir, seed, n_rules, n_decoys, pairs_per_rule, noise_rate, character, nest_fraction):
    """Generate a planted-rule world plus a matching synthetic corpus."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = make_world(n_rules=n_rules, n_decoys=n_decoys, seed=seed, noise_rate=noise_rate)
    corpus = synthesize_pairs(
        world, pairs_per_rule=pairs_per_rule, character=character, nest_fraction=nest_fraction
    )
    world.save(out / "world.json")
    save_pairs(out / "pairs.jsonl", corpus)
    click.echo(
        json.dumps(
            {
                "world": str(out / "world.json"),
                "pairs": str(out / "pairs.jsonl"),
                "pair_count": len(corpus.pairs),
            }
        )
    )


@main.command("evaluate")
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--oracles", "oracle_path", required=True, type=click.Path(exists=True))
@click.option("--strategies", default="cdt", show_default=True, help="comma list: cdt,vanilla,ricl,eta,profile")
@click.option("--tree", "tree_path", type=click.Path(exists=True), help="tree for the cdt strategy")
@click.option("--train", "train_path", type=click.Path(exists=True), help="train corpus for ricl/eta")
@click.option("--profile", "profile_path", type=click.Path(exists=True), help="profile text for the profile strategy")
@click.option("--policy", type=click.Choice(POLICIES), default=DEFAULT_POLICY, show_default=True)
@click.option("--k", type=int, default=DEFAULT_K, show_default=True)
@click.option("--ricl-m", type=int, default=8, show_default=True)
@click.option("--eta-block", type=int, default=16, show_default=True)
@click.option(
    "--scaling-sizes",
    default=None,
    help="comma list of train sizes; re-induces per size and exports the scaling curve (needs --train)",
)
@click.option("--seed", type=int, default=0, show_default=True, help="seed for scaling-study inductions")
@click.option("--out-dir", default="reports", show_default=True)
@operational
def evaluate_cmd(
    test_path,
    oracle_path,
    strategies,
    tree_path,
    train_path,
    profile_path,
    policy,
    k,
    ricl_m,
    eta_block,
    scaling_sizes,
    seed,
    out_dir,
):
    """Score grounding strategies on a test corpus; write reports and figures."""
    test = load_pairs(test_path)
    suite = load_oracle_suite(oracle_path)
    train = load_pairs(train_path) if train_path else None
    tree = (
        deserialize_tree(Path(tree_path).read_text(encoding="utf-8")) if tree_path else None
    )

    results = []
    for name in [s.strip() for s in strategies.split(",") if s.strip()]:
        if name == "cdt":
            if tree is None:
                raise click.UsageError("the cdt strategy requires --tree")
            strategy = make_cdt_strategy(tree, TopKPolicy(policy, k), suite)
            snapshot = {"policy": policy, "k": k, **tree.config.to_dict()}
        elif name == "vanilla":
            strategy = make_vanilla_strategy(test.character, suite.rp_generator)
            snapshot = {}
        elif name == "ricl":
            if train is None:
                raise click.UsageError("the ricl strategy requires --train")
            strategy = make_ricl_strategy(train, suite.embedder, suite.rp_generator, m=ricl_m)
            snapshot = {"m": ricl_m}
        elif name == "eta":
            if train is None:
                raise click.UsageError("the eta strategy requires --train")
            profile = eta_profile(train, _GeneratorAsClient(suite.rp_generator), block=eta_block)
            strategy = make_profile_strategy(test.character, profile, suite.rp_generator)
            snapshot = {"block": eta_block}
        elif name == "profile":
            if profile_path is None:
                raise click.UsageError("the profile strategy requires --profile")
            text = Path(profile_path).read_text(encoding="utf-8")
            strategy = make_profile_strategy(test.character, text, suite.rp_generator)
            snapshot = {"profile": profile_path}
        else:
            raise click.UsageError(f"unknown strategy {name!r}")
        results.append(evaluate_strategy(strategy, test, suite.nli, name, config_snapshot=snapshot))

    scaling_rows = None
    if scaling_sizes:
        if train is None:
            raise click.UsageError("--scaling-sizes requires --train")
        sizes = [int(s) for s in scaling_sizes.split(",") if s.strip()]
        scaling_rows = _scaling_study(train, test, suite, sizes, policy, k, seed)

    paths = write_report(results, out_dir, scaling=scaling_rows)
    click.echo(json.dumps({name: str(path) for name, path in paths.items()}))


def _scaling_study(train, test, suite, sizes, policy, k, seed):
    """Induce one tree per training-size prefix and score it on the test set."""
    from .corpus import Corpus as _Corpus

    rows = []
    for size in sizes:
        subset = _Corpus(character=train.character, pairs=train.pairs[:size], split_tag="train")
        config = InductionConfig(seed=seed, min_node_data=min(16, max(1, size)))
        tree, _ = induce(subset, config, suite)
        result = evaluate_strategy(
            make_cdt_strategy(tree, TopKPolicy(policy, k), suite),
            test,
            suite.nli,
            f"cdt@{size}",
        )
        rows.append({"strategy": "cdt", "train_size": size, "mean": result.mean})
    return rows


@main.command("serve")
@click.option("--bind", default="127.0.0.1:8040", show_default=True)
@click.option("--store", "store_path", required=True)
@click.option("--oracles", "oracle_path", required=True, type=click.Path(exists=True))
@operational
def serve_cmd(bind, store_path, oracle_path):
    """Run the HTTP service backing the authoring studio."""
    import uvicorn

    from .service import create_app

    host, _, port = bind.partition(":")
    app = create_app(store_path, oracle_config_path=oracle_path)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8040), log_level="warning")


if __name__ == "__main__":
    main()
