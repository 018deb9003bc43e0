from __future__ import annotations

import threading

import httpx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdtree.exceptions import TransportError, ValidationError
from cdtree.oracles import (
    CallRecord,
    HashEmbedder,
    HttpOracleConfig,
    PlantedRule,
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
from cdtree.oracles.base import parse_nli_label, parse_verdict
from cdtree.oracles.planted import PlantedHypothesizer

from conftest import make_pair


class TestParsers:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("True", "True"),
            ("  true.", "True"),
            ("Yes, it does", "True"),
            ("False", "False"),
            ("no", "False"),
            ("cannot be determined", "Unknown"),
            ("Unknown", "Unknown"),
            ("", "Unknown"),
            ("the scene is false, not true", "False"),
        ],
    )
    def test_verdict_cases(self, text, expected):
        assert parse_verdict(text) == expected

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("entailed", "entailed"),
            ("This contradicts the claim", "contradicted"),
            ("neutral", "neutral"),
            ("The premise entails the hypothesis", "entailed"),
            ("?????", "neutral"),
        ],
    )
    def test_nli_cases(self, text, expected):
        assert parse_nli_label(text) == expected

    @given(st.text(max_size=200))
    def test_verdict_total(self, text):
        assert parse_verdict(text) in {"True", "False", "Unknown"}

    @given(st.text(max_size=200))
    def test_nli_total(self, text):
        assert parse_nli_label(text) in {"entailed", "neutral", "contradicted"}


class TestPlantedWorld:
    def test_duplicate_trigger_sets_rejected(self):
        rule = PlantedRule(("a", "b"), "x", "y")
        with pytest.raises(ValidationError):
            PlantedWorld(rules=[rule], decoys=[PlantedRule(("b", "a"), "p", "q")])

    def test_behavior_equals_contradiction_rejected(self):
        with pytest.raises(ValidationError):
            PlantedRule(("a",), "same", "same")

    def test_save_load_round_trip(self, tmp_path):
        world = make_world(seed=5, noise_rate=0.1)
        path = tmp_path / "world.json"
        world.save(path)
        assert PlantedWorld.load(path) == world


class TestPlantedOracles:
    def setup_method(self):
        self.world = PlantedWorld(
            rules=[PlantedRule(("storm", "night"), "hides", "wanders")],
            decoys=[PlantedRule(("feast",), "sings", "sulks")],
            seed=3,
        )
        self.suite = planted_suite(self.world)

    def test_check_containment(self):
        rule = self.world.rules[0]
        assert self.suite.discriminator.check("a storm at night", rule.question()) == "True"
        assert self.suite.discriminator.check("a sunny day", rule.question()) == "False"

    def test_nli_rule_semantics(self):
        statement = self.world.rules[0].statement()
        assert self.suite.nli.judge("she hides away", statement) == "entailed"
        assert self.suite.nli.judge("she wanders out", statement) == "contradicted"
        assert self.suite.nli.judge("she sleeps", statement) == "neutral"

    def test_nli_free_text(self):
        assert self.suite.nli.judge("she hides away", "she hides away") == "entailed"
        assert self.suite.nli.judge("she hides", "she wanders") == "contradicted"
        assert self.suite.nli.judge("she naps", "she dances") == "neutral"

    def test_purity_with_noise(self):
        noisy = planted_suite(
            PlantedWorld(rules=self.world.rules, decoys=[], noise_rate=0.5, seed=9)
        )
        question = self.world.rules[0].question()
        first = [noisy.discriminator.check(f"scene {i} storm night", question) for i in range(40)]
        second = [noisy.discriminator.check(f"scene {i} storm night", question) for i in range(40)]
        assert first == second
        assert "Unknown" in first and "True" in first

    def test_hypothesizer_ranks_by_support(self):
        hypothesizer: PlantedHypothesizer = self.suite.hypothesizer
        cluster = [
            make_pair([("env", "storm night falls")], "she hides", base_index=0),
            make_pair([("env", "storm night again")], "she hides", base_index=20),
            make_pair([("env", "a feast begins")], "she sings", base_index=40),
        ]
        proposals = hypothesizer.propose(cluster, "hero", [], [], n=2)
        assert proposals[0].question == self.world.rules[0].question()
        assert proposals[1].question == self.world.decoys[0].question()

    def test_hypothesizer_skips_established_and_path(self):
        hypothesizer: PlantedHypothesizer = self.suite.hypothesizer
        cluster = [make_pair([("env", "storm night feast")], "she hides")]
        rule, decoy = self.world.rules[0], self.world.decoys[0]
        none_left = hypothesizer.propose(
            cluster, "hero", [rule.question()], [decoy.statement()], n=3
        )
        assert none_left == []

    def test_rp_generator_echoes_grounded_behaviors(self):
        text = self.suite.rp_generator.generate("grounding: does: hides\nscene: storm")
        assert "hides" in text


class TestHashEmbedder:
    def test_deterministic(self):
        embedder = HashEmbedder(seed=1)
        assert np.array_equal(embedder.embed_action("a b c"), embedder.embed_action("a b c"))

    def test_overlap_is_closer_than_disjoint(self):
        embedder = HashEmbedder(dim=64, seed=0)
        base = embedder.embed_action("sword shield banner")
        near = embedder.embed_action("sword shield tavern")
        far = embedder.embed_action("moon river lantern")

        def cosine(a, b):
            return float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))

        assert cosine(base, near) > cosine(base, far)

    def test_scene_template_applied(self):
        embedder = HashEmbedder(dim=64, seed=0)
        assert not np.array_equal(
            embedder.embed_scene("alpha", "hero"), embedder.embed_action("alpha")
        )


def chat_response(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def embed_response(vector) -> httpx.Response:
    return httpx.Response(200, json={"data": [{"embedding": list(vector)}]})


def make_http_suite(handler, tmp_path=None, retries=3):
    config = HttpOracleConfig(
        base_url="http://mock",
        chat_model="chat-model",
        embed_model="embed-model",
        cache_dir=str(tmp_path) if tmp_path else None,
        max_retries=retries,
        backoff_base=0.0,
    )
    return http_suite(config, transport=httpx.MockTransport(handler))


class TestHttpOracles:
    def test_scripted_true(self):
        suite = make_http_suite(lambda request: chat_response("True"))
        assert suite.discriminator.check("scene", "q?") == "True"

    def test_fallback_unknown(self):
        suite = make_http_suite(lambda request: chat_response("cannot be determined"))
        assert suite.discriminator.check("scene", "q?") == "Unknown"

    def test_cache_dedupes_upstream(self):
        counter = {"n": 0}

        def handler(request):
            counter["n"] += 1
            return chat_response("True")

        suite = make_http_suite(handler)
        for _ in range(4):
            assert suite.discriminator.check("scene", "q?") == "True"
        assert counter["n"] == 1
        suite.discriminator.check("other scene", "q?")
        assert counter["n"] == 2

    def test_disk_cache_survives_new_client(self, tmp_path):
        counter = {"n": 0}

        def handler(request):
            counter["n"] += 1
            return chat_response("False")

        make_http_suite(handler, tmp_path).discriminator.check("s", "q?")
        make_http_suite(handler, tmp_path).discriminator.check("s", "q?")
        assert counter["n"] == 1

    def test_retry_then_success(self):
        attempts = {"n": 0}

        def handler(request):
            attempts["n"] += 1
            if attempts["n"] < 3:
                return httpx.Response(500)
            return chat_response("True")

        suite = make_http_suite(handler)
        assert suite.discriminator.check("s", "q?") == "True"
        assert attempts["n"] == 3

    def test_transport_error_after_retries(self):
        def handler(request):
            raise httpx.ConnectError("down", request=request)

        suite = make_http_suite(handler, retries=2)
        with pytest.raises(TransportError, match="2 attempts"):
            suite.discriminator.check("s", "q?")

    def test_embedding_and_nli_paths(self):
        def handler(request):
            if request.url.path.endswith("/embeddings"):
                return embed_response([1.0, 2.0, 3.0])
            return chat_response("entailed")

        suite = make_http_suite(handler)
        assert suite.nli.judge("p", "h") == "entailed"
        assert np.array_equal(suite.embedder.embed_action("x"), np.array([1.0, 2.0, 3.0]))

    def test_hypothesizer_parses_json(self):
        payload = '[{"question": "storm?", "statement": "hides"}]'

        suite = make_http_suite(lambda request: chat_response(payload))
        proposals = suite.hypothesizer.propose(
            [make_pair([("a", "s")], "act")], "hero", [], [], n=3
        )
        assert len(proposals) == 1
        assert proposals[0].question == "storm?"

    def test_concurrent_same_key_single_upstream(self):
        counter = {"n": 0}
        gate = threading.Barrier(4)

        def handler(request):
            counter["n"] += 1
            return chat_response("True")

        suite = make_http_suite(handler)

        def hit():
            gate.wait()
            suite.discriminator.check("same scene", "same q")

        threads = [threading.Thread(target=hit) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert counter["n"] == 1


class TestRecordingSuite:
    def test_records_check_and_nli(self):
        world = make_world(n_rules=1, n_decoys=0, seed=0)
        suite = RecordingSuite(planted_suite(world))
        suite.discriminator.check("trig0a trig0b here", world.rules[0].question())
        suite.nli.judge("does beh0", world.rules[0].statement())
        assert [r.operation for r in suite.records] == ["check", "nli"]
        assert suite.call_count == 2


class TestDistillationExport:
    def make_log(self, spec: dict[str, int]) -> list[CallRecord]:
        records = []
        for label, count in spec.items():
            for i in range(count):
                records.append(CallRecord("nli", f"p{label}{i}", "h", label))
        return records

    def test_one_percent_of_thousand(self):
        log = self.make_log({"entailed": 600, "neutral": 300, "contradicted": 100})
        sample = export_distillation_set(log, fraction=0.01, seed=0)
        assert len(sample) == 10

    def test_full_fraction_identity(self):
        log = self.make_log({"entailed": 7, "neutral": 3})
        assert export_distillation_set(log, fraction=1.0) == log

    def test_stratified_ninety_ten(self):
        log = self.make_log({"entailed": 90, "contradicted": 10})
        sample = export_distillation_set(log, fraction=0.1, seed=1)
        labels = [r.label for r in sample]
        assert labels.count("entailed") == 9
        assert labels.count("contradicted") == 1

    def test_empty_log(self):
        assert export_distillation_set([], fraction=0.5) == []

    def test_order_stable(self):
        log = self.make_log({"entailed": 50, "neutral": 50})
        sample = export_distillation_set(log, fraction=0.2, seed=3)
        positions = [log.index(r) for r in sample]
        assert positions == sorted(positions)

    def test_round_trip_file(self, tmp_path):
        log = self.make_log({"entailed": 3})
        path = tmp_path / "calls.jsonl"
        save_call_log(path, log)
        assert load_call_log(path) == log
