from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from cdtree.cli import main
from cdtree.codex import deserialize_tree


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fixture_dir(tmp_path, runner):
    result = runner.invoke(
        main, ["gen-synthetic", "--out-dir", str(tmp_path), "--seed", "5", "--pairs-per-rule", "20"]
    )
    assert result.exit_code == 0, result.output
    return tmp_path


def induce_fixture(runner, fixture_dir, *extra):
    out = fixture_dir / "tree.json"
    result = runner.invoke(
        main,
        [
            "induce",
            "--pairs",
            str(fixture_dir / "pairs.jsonl"),
            "--oracles",
            str(fixture_dir / "world.json"),
            "--out",
            str(out),
            *extra,
        ],
    )
    return result, out


class TestGenSynthetic:
    def test_writes_world_and_pairs(self, fixture_dir):
        assert (fixture_dir / "world.json").exists()
        pairs = (fixture_dir / "pairs.jsonl").read_text().strip().splitlines()
        assert len(pairs) == 200


class TestInduce:
    def test_end_to_end_writes_tree(self, runner, fixture_dir):
        result, out = induce_fixture(runner, fixture_dir)
        assert result.exit_code == 0, result.output
        tree = deserialize_tree(out.read_text())
        assert tree.statement_count() >= 5
        summary = json.loads(result.output)
        assert summary["nodes"] == len(tree.nodes)

    def test_bad_thresholds_usage_error(self, runner, fixture_dir):
        result, _ = induce_fixture(
            runner, fixture_dir, "--theta-acc", "0.5", "--theta-rej", "0.6"
        )
        assert result.exit_code == 2
        assert "theta_rej" in result.output

    def test_unknown_flag_is_usage_error(self, runner):
        result = runner.invoke(main, ["induce", "--bogus"])
        assert result.exit_code == 2

    def test_operational_failure_single_line_json(self, runner, fixture_dir, tmp_path):
        small = tmp_path / "small.jsonl"
        lines = (fixture_dir / "pairs.jsonl").read_text().strip().splitlines()[:3]
        small.write_text("\n".join(lines) + "\n")
        result = runner.invoke(
            main,
            [
                "induce",
                "--pairs",
                str(small),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--out",
                str(tmp_path / "t.json"),
            ],
        )
        assert result.exit_code == 1
        error_line = result.output.strip().splitlines()[-1]
        assert "corpus too small" in json.loads(error_line)["error"]

    def test_goal_driven_flags(self, runner, fixture_dir):
        result, out = induce_fixture(
            runner,
            fixture_dir,
            "--goal-related",
            "ally",
            "--goal-instruction",
            "focus on ally",
            "--min-node-data",
            "4",
        )
        assert result.exit_code == 0, result.output
        tree = deserialize_tree(out.read_text())
        assert tree.kind == "goal_driven"
        assert tree.relation_target == "ally"

    def test_manifest_drives_the_job(self, runner, fixture_dir, tmp_path):
        manifest = tmp_path / "job.yaml"
        out = tmp_path / "from-manifest.json"
        manifest.write_text(
            "\n".join(
                [
                    f"pairs: {fixture_dir / 'pairs.jsonl'}",
                    f"oracles: {fixture_dir / 'world.json'}",
                    f"out: {out}",
                    "workers: 2",
                    "config:",
                    "  seed: 5",
                    "  d_max: 2",
                ]
            )
        )
        result = runner.invoke(main, ["induce", "--manifest", str(manifest)])
        assert result.exit_code == 0, result.output
        tree = deserialize_tree(out.read_text())
        assert tree.config.d_max == 2
        assert tree.config.seed == 5

    def test_corpus_alias_for_pairs(self, runner, fixture_dir, tmp_path):
        out = tmp_path / "alias-tree.json"
        result = runner.invoke(
            main,
            [
                "induce",
                "--corpus",
                str(fixture_dir / "pairs.jsonl"),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--out",
                str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert out.exists()

    def test_calls_log_and_distill(self, runner, fixture_dir):
        calls = fixture_dir / "calls.jsonl"
        result, _ = induce_fixture(runner, fixture_dir, "--calls-log", str(calls))
        assert result.exit_code == 0
        n_calls = len(calls.read_text().strip().splitlines())
        out = fixture_dir / "distill.jsonl"
        result = runner.invoke(
            main,
            ["export-distill", "--calls-log", str(calls), "--fraction", "0.01", "--out", str(out)],
        )
        assert result.exit_code == 0
        assert len(out.read_text().strip().splitlines()) == round(0.01 * n_calls)


class TestTraverseAndGround:
    def test_traverse_prints_bundle(self, runner, fixture_dir):
        _, tree_path = induce_fixture(runner, fixture_dir)
        scene = fixture_dir / "scene.txt"
        scene.write_text("narrator: trig0a trig0b loom\n")
        result = runner.invoke(
            main,
            [
                "traverse",
                "--tree",
                str(tree_path),
                "--scene",
                str(scene),
                "--oracles",
                str(fixture_dir / "world.json"),
            ],
        )
        assert result.exit_code == 0, result.output
        bundle = json.loads(result.output)
        assert bundle["visited"][0] == 0
        assert bundle["statements"]

    def test_ground_returns_action(self, runner, fixture_dir):
        _, tree_path = induce_fixture(runner, fixture_dir)
        scene = fixture_dir / "scene.txt"
        scene.write_text("narrator: trig0a trig0b loom\n")
        result = runner.invoke(
            main,
            [
                "ground",
                "--tree",
                str(tree_path),
                "--scene",
                str(scene),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--k",
                "3",
            ],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["action"]
        assert "bundle" in payload and "prompt" in payload


class TestVerbalizeAndWikify:
    def test_verbalize_lines(self, runner, fixture_dir):
        _, tree_path = induce_fixture(runner, fixture_dir)
        result = runner.invoke(main, ["verbalize", "--tree", str(tree_path)])
        assert result.exit_code == 0
        assert any(line.startswith(("ALWAYS:", "IF ")) for line in result.output.splitlines())

    def test_wikify_with_planted_generator(self, runner, fixture_dir, tmp_path):
        _, tree_path = induce_fixture(runner, fixture_dir)
        out = tmp_path / "wiki.txt"
        result = runner.invoke(
            main,
            [
                "wikify",
                "--tree",
                str(tree_path),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--out",
                str(out),
            ],
        )
        # the planted generator does not emit outline syntax, so wikify reports
        # an extraction failure as an operational error, not a crash
        if result.exit_code == 0:
            assert out.exists()
        else:
            assert result.exit_code == 1
            assert "error" in json.loads(result.output.strip().splitlines()[-1])


class TestEvaluateCommand:
    def test_report_artifacts_written(self, runner, fixture_dir, tmp_path):
        _, tree_path = induce_fixture(runner, fixture_dir)
        out_dir = tmp_path / "reports"
        result = runner.invoke(
            main,
            [
                "evaluate",
                "--test",
                str(fixture_dir / "pairs.jsonl"),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--strategies",
                "cdt,vanilla",
                "--tree",
                str(tree_path),
                "--out-dir",
                str(out_dir),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (out_dir / "report.jsonl").exists()
        assert (out_dir / "report.txt").exists()
        assert (out_dir / "scores.png").exists()
        rows = [json.loads(l) for l in (out_dir / "report.jsonl").read_text().splitlines()]
        assert {r["strategy"] for r in rows} == {"cdt", "vanilla"}
        for row in rows:
            assert 0.0 <= row["mean"] <= 100.0

    def test_scaling_study_exports_curve(self, runner, fixture_dir, tmp_path):
        _, tree_path = induce_fixture(runner, fixture_dir)
        out_dir = tmp_path / "reports"
        result = runner.invoke(
            main,
            [
                "evaluate",
                "--test",
                str(fixture_dir / "pairs.jsonl"),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--strategies",
                "cdt",
                "--tree",
                str(tree_path),
                "--train",
                str(fixture_dir / "pairs.jsonl"),
                "--scaling-sizes",
                "32,64",
                "--out-dir",
                str(out_dir),
            ],
        )
        assert result.exit_code == 0, result.output
        rows = [json.loads(l) for l in (out_dir / "scaling.jsonl").read_text().splitlines()]
        assert [r["train_size"] for r in rows] == [32, 64]
        assert (out_dir / "scaling.png").exists()

    def test_cdt_without_tree_is_usage_error(self, runner, fixture_dir):
        result = runner.invoke(
            main,
            [
                "evaluate",
                "--test",
                str(fixture_dir / "pairs.jsonl"),
                "--oracles",
                str(fixture_dir / "world.json"),
                "--strategies",
                "cdt",
            ],
        )
        assert result.exit_code == 2
