from __future__ import annotations

import json
import threading

import numpy as np
import pytest

from scholardb.errors import CassetteMissError, ProviderError, SchemaViolationError
from scholardb.llm import (
    Accounting,
    Cassette,
    GeometryEmbedder,
    HashEmbedder,
    LlmClient,
    PromptRequest,
    ScriptedChat,
    cosine,
    fingerprint_request,
)


def make_client(**kwargs) -> LlmClient:
    defaults = dict(chat=ScriptedChat(default="pong"), embed_dim=16)
    defaults.update(kwargs)
    return LlmClient(**defaults)


class TestPromptRequest:
    def test_requires_user_message(self):
        with pytest.raises(ValueError):
            PromptRequest((("system", "hi"),))

    def test_temperature_bounds(self):
        with pytest.raises(ValueError):
            PromptRequest.build("q", temperature=2.5)

    def test_build_defaults(self):
        req = PromptRequest.build("q", system="s")
        assert req.messages == (("system", "s"), ("user", "q"))
        assert req.temperature == 0.0


class TestFingerprint:
    def test_equal_requests_equal_digests(self):
        a = PromptRequest.build("hello", system="s")
        b = PromptRequest.build("hello", system="s")
        assert fingerprint_request(a) == fingerprint_request(b)

    def test_whitespace_matters(self):
        a = PromptRequest.build("hello ")
        b = PromptRequest.build("hello")
        assert fingerprint_request(a) != fingerprint_request(b)

    def test_sensitive_to_schema_and_temperature(self):
        base = PromptRequest.build("q")
        assert fingerprint_request(base) != fingerprint_request(
            PromptRequest.build("q", response_schema="x"))
        assert fingerprint_request(base) != fingerprint_request(
            PromptRequest.build("q", temperature=1.0))

    def test_stable_across_cassette_round_trip(self, tmp_path):
        req = PromptRequest.build("persist me")
        client = make_client(cassette=Cassette("record", tmp_path / "c.jsonl"))
        client.complete(req)
        fp = client.fingerprint(req)
        reloaded = Cassette("replay-strict", tmp_path / "c.jsonl")
        assert reloaded.lookup(fp) is not None


class TestCassette:
    def test_replay_returns_recorded(self, tmp_path):
        cassette = Cassette("record", tmp_path / "c.jsonl")
        client = make_client(cassette=cassette)
        req = PromptRequest.build("ping")
        first, _ = client.complete(req)
        replay = make_client(chat=None,
                             cassette=Cassette("replay", tmp_path / "c.jsonl"))
        second, _ = replay.complete(req)
        third, _ = replay.complete(req)
        assert first == second == third == "pong"

    def test_replay_strict_miss_raises(self):
        client = make_client(cassette=Cassette("replay-strict"))
        with pytest.raises(CassetteMissError):
            client.complete(PromptRequest.build("unseen"))

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            Cassette("playback")

    def test_schema_response_parsed(self):
        chat = ScriptedChat([("greY", None, "x")],
                            default=json.dumps({"label": "ok"}))
        client = make_client(chat=chat)
        payload = client.complete_json(
            PromptRequest.build("q", response_schema="any"), required=("label",))
        assert payload == {"label": "ok"}


class TestCompleteJson:
    def test_retry_once_then_succeed(self):
        calls = []

        def flaky(req):
            calls.append(req)
            return "not json" if len(calls) == 1 else json.dumps({"a": 1})

        client = make_client(chat=ScriptedChat(default=flaky))
        payload = client.complete_json(
            PromptRequest.build("q", response_schema="s"), required=("a",))
        assert payload == {"a": 1}
        assert len(calls) == 2

    def test_schema_violation_after_retry(self):
        client = make_client(chat=ScriptedChat(default="still not json"))
        with pytest.raises(SchemaViolationError) as err:
            client.complete_json(PromptRequest.build("q", response_schema="s"),
                                 required=("a",))
        assert "not json" in err.value.raw

    def test_missing_required_key(self):
        client = make_client(chat=ScriptedChat(default=json.dumps({"b": 2})))
        with pytest.raises(SchemaViolationError):
            client.complete_json(PromptRequest.build("q", response_schema="s"),
                                 required=("a",))


class TestEmbeddings:
    def test_deterministic_per_text(self):
        client = make_client()
        a = client.embed("some text")
        b = client.embed("some text")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        client = make_client()
        vec = client.embed("anything at all")
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-9

    def test_self_cosine_is_one(self):
        client = make_client()
        vec = client.embed("t")
        assert abs(cosine(vec, vec) - 1.0) < 1e-12

    def test_empty_text_rejected(self):
        with pytest.raises(ProviderError):
            make_client().embed("")

    def test_cassette_replay_of_embeddings(self, tmp_path):
        recorder = make_client(cassette=Cassette("record", tmp_path / "c.jsonl"))
        vec = recorder.embed("stable")
        replayer = LlmClient(cassette=Cassette("replay-strict",
                                               tmp_path / "c.jsonl"),
                             embed_dim=16)
        assert np.array_equal(replayer.embed("stable"), vec)

    def test_geometry_embedder_places_cosine(self):
        emb = GeometryEmbedder(dim=32, seed=1)
        emb.place_near("b", "a", 0.9)
        a = np.asarray(emb.embed("a"))
        b = np.asarray(emb.embed("b"))
        assert abs(float(a @ b) - 0.9) < 1e-9

    def test_hash_embedder_near_orthogonal(self):
        emb = HashEmbedder(dim=64, seed=0)
        a = np.asarray(emb.embed("left"))
        b = np.asarray(emb.embed("right"))
        assert abs(float(a @ b)) < 0.5


class TestAccounting:
    def test_zero_calls_all_zero(self):
        summary = make_client().accounting_summary()
        assert summary["input_tokens"] == 0
        assert summary["output_tokens"] == 0
        assert summary["call_count"] == 0

    def test_token_sums(self):
        chat = ScriptedChat(default=lambda req: "o " * 1)
        client = make_client(chat=chat)
        client.complete(PromptRequest.build("a b c d e f g h i j"))  # 10 in
        client.complete(PromptRequest.build(" ".join(["w"] * 20)))   # 20 in
        summary = client.accounting_summary()
        assert summary["input_tokens"] == 30
        assert summary["call_count"] == 2

    def test_reset(self):
        client = make_client()
        client.complete(PromptRequest.build("x"))
        client.reset_accounting()
        assert client.accounting_summary()["call_count"] == 0

    def test_per_call_records_sum_to_summary(self):
        client = make_client()
        for i in range(5):
            client.complete(PromptRequest.build(f"call {i}"))
        summary = client.accounting_summary()
        records = client.accounting.records
        assert summary["input_tokens"] == sum(r.input_tokens for r in records
                                              if r.kind == "chat")
        assert summary["call_count"] == 5

    def test_tally_mirrors_records(self):
        client = make_client()
        tally = Accounting()
        view = client.with_tally(tally)
        view.complete(PromptRequest.build("seen by both"))
        assert tally.summary()["call_count"] == 1
        assert client.accounting_summary()["call_count"] == 1

    def test_concurrent_calls_all_logged(self):
        client = make_client()
        threads = [threading.Thread(
            target=lambda i=i: client.complete(PromptRequest.build(f"t{i}")))
            for i in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert client.accounting_summary()["call_count"] == 16
