import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from querydistill.annotations import Confidence
from querydistill.errors import AnnotatorConfigError
from querydistill.llm_client import (AnnotationFailure, AnnotatorHandle,
                                     HttpEndpointConfig, ResponseCache,
                                     annotate_batch, mock_annotate, mock_handle)
from querydistill.prompting import parse_response


@dataclass(frozen=True)
class FakePrompt:
    text: str
    sections: tuple = ()
    query: str = ""
    persona_id: str = ""


class ScriptedServer:
    """HTTP server answering from a per-prompt script of status codes."""

    def __init__(self, script):
        self.script = dict(script)      # prompt -> list of statuses; empty = 200
        self.requests = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                body = json.loads(self.rfile.read(length))
                prompt = body["prompt"]
                with outer._lock:
                    outer.requests.append(prompt)
                    statuses = outer.script.get(prompt, [])
                    status = statuses.pop(0) if statuses else 200
                if status == 200:
                    payload = f"echo:{prompt}".encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                else:
                    self.send_response(status)
                    self.send_header("Content-Length", "0")
                    self.end_headers()

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/annotate"

    def stop(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def http_config():
    def make(url, **kwargs):
        defaults = dict(url=url, model="fake-model", backoff=0.01,
                        requests_per_second=0.0, in_flight_limit=2)
        defaults.update(kwargs)
        return HttpEndpointConfig(**defaults)
    return make


class TestMockAnnotator:
    def test_gazetteer_lookup(self, tiny_gazetteer):
        handle = mock_handle(tiny_gazetteer, noise_rate=0.0)
        response = mock_annotate(handle, "comedy movies")
        assert response == "Genre|High\nIntentMovie|High"

    def test_deterministic(self, tiny_gazetteer):
        handle = mock_handle(tiny_gazetteer, seed=3, noise_rate=0.5)
        a = mock_annotate(handle, "comedy movies", persona="movie_buff")
        b = mock_annotate(handle, "comedy movies", persona="movie_buff")
        assert a == b

    def test_persona_bias_adds_entity(self, tiny_gazetteer):
        handle = mock_handle(
            tiny_gazetteer,
            persona_bias={"sports_fan": {"add": {"Sport": "Low"}}})
        response = mock_annotate(handle, "comedy movies", persona="sports_fan")
        assert "Sport|Low" in response
        plain = mock_annotate(handle, "comedy movies")
        assert "Sport" not in plain

    def test_persona_bias_removes_entity(self, tiny_gazetteer):
        handle = mock_handle(
            tiny_gazetteer, persona_bias={"minimal": {"remove": ["IntentMovie"]}})
        response = mock_annotate(handle, "comedy movies", persona="minimal")
        assert response == "Genre|High"

    def test_no_match_renders_none(self, tiny_gazetteer, tiny_registry):
        handle = mock_handle(tiny_gazetteer)
        response = mock_annotate(handle, "something else entirely")
        assert parse_response(tiny_registry, response).entities == {}

    def test_zero_noise_equals_pure_lookup(self, tiny_gazetteer):
        handle = mock_handle(tiny_gazetteer, noise_rate=0.0)
        queries = ["comedy movies", "watch football", "horror tennis",
                   "free things", "movie about football"]
        for q in queries:
            expected = {e: Confidence.HIGH for e in tiny_gazetteer.match(q)}
            response = mock_annotate(handle, q)
            lines = {} if response == "None" else {
                line.split("|")[0]: Confidence.from_label(line.split("|")[1])
                for line in response.splitlines()
            }
            assert lines == expected

    def test_noise_perturbs_confidence_only(self, tiny_gazetteer):
        handle = mock_handle(tiny_gazetteer, seed=0, noise_rate=0.999)
        response = mock_annotate(handle, "comedy movies")
        labels = dict(line.split("|") for line in response.splitlines())
        assert set(labels) == {"Genre", "IntentMovie"}
        assert any(v != "High" for v in labels.values())

    def test_ambiguous_phrase_resolved_by_icl(self, tiny_gazetteer):
        handle = mock_handle(tiny_gazetteer, ambiguous={"comedy": "Sport"})
        without_icl = mock_annotate(handle, "comedy night", sections=())
        with_icl = mock_annotate(handle, "comedy night", sections=("icl",))
        assert without_icl == "Sport|High"
        assert with_icl == "Genre|High"


class TestAnnotateBatchMock:
    def test_three_prompts_three_responses(self, tiny_gazetteer):
        handle = mock_handle(tiny_gazetteer)
        prompts = [FakePrompt(text=f"p{i}", query=q) for i, q in
                   enumerate(["comedy movies", "football", "nothing here"])]
        results = annotate_batch(handle, prompts)
        assert len(results) == 3
        assert not any(isinstance(r, AnnotationFailure) for r in results)
        assert results[0] == "Genre|High\nIntentMovie|High"
        assert results[2] == "None"

    def test_cache_serves_second_run(self, tiny_gazetteer, tmp_path):
        cache = ResponseCache(tmp_path / "cache")
        handle = mock_handle(tiny_gazetteer)
        prompts = [FakePrompt(text="the prompt", query="comedy movies")]
        first = annotate_batch(handle, prompts, cache=cache)
        assert handle.stats.calls == 1

        fresh = mock_handle(tiny_gazetteer)
        second = annotate_batch(fresh, prompts, cache=cache)
        assert fresh.stats.calls == 0
        assert fresh.stats.cache_hits == 1
        assert second == first

    def test_empty_batch_rejected(self, tiny_gazetteer):
        with pytest.raises(ValueError):
            annotate_batch(mock_handle(tiny_gazetteer), [])


class TestAnnotateBatchHttp:
    def test_retry_until_success(self, http_config):
        server = ScriptedServer({"flaky": [500, 500]})
        try:
            handle = AnnotatorHandle(http_config(server.url, max_retries=3))
            results = annotate_batch(handle, [FakePrompt(text="flaky")])
            assert results == ["echo:flaky"]
            assert server.requests == ["flaky", "flaky", "flaky"]
            assert handle.stats.calls == 3
        finally:
            server.stop()

    def test_retries_exhausted_is_failure_record(self, http_config):
        server = ScriptedServer({"dead": [500] * 10})
        try:
            handle = AnnotatorHandle(http_config(server.url, max_retries=2))
            results = annotate_batch(handle, [FakePrompt(text="dead")])
            failure = results[0]
            assert isinstance(failure, AnnotationFailure)
            assert failure.attempts == 3
            assert "500" in failure.error
        finally:
            server.stop()

    def test_permanent_status_not_retried(self, http_config):
        server = ScriptedServer({"bad": [400]})
        try:
            handle = AnnotatorHandle(http_config(server.url, max_retries=5))
            results = annotate_batch(handle, [FakePrompt(text="bad")])
            assert isinstance(results[0], AnnotationFailure)
            assert server.requests == ["bad"]
        finally:
            server.stop()

    def test_order_preserved_with_interleaved_failure(self, http_config):
        server = ScriptedServer({"b": [404]})
        try:
            handle = AnnotatorHandle(http_config(server.url, max_retries=1))
            results = annotate_batch(
                handle, [FakePrompt(text=t) for t in ("a", "b", "c")])
            assert results[0] == "echo:a"
            assert isinstance(results[1], AnnotationFailure)
            assert results[1].index == 1
            assert results[2] == "echo:c"
        finally:
            server.stop()

    def test_missing_auth_env_fails_before_any_request(self, http_config):
        server = ScriptedServer({})
        try:
            handle = AnnotatorHandle(
                http_config(server.url, auth_env="QD_TEST_TOKEN_NOT_SET"))
            with pytest.raises(AnnotatorConfigError):
                annotate_batch(handle, [FakePrompt(text="x")])
            assert server.requests == []
        finally:
            server.stop()

    def test_auth_header_sent(self, http_config, monkeypatch):
        # auth presence is validated up front; the request itself carries it
        monkeypatch.setenv("QD_TEST_TOKEN", "secret")
        server = ScriptedServer({})
        try:
            handle = AnnotatorHandle(http_config(server.url, auth_env="QD_TEST_TOKEN"))
            results = annotate_batch(handle, [FakePrompt(text="x")])
            assert results == ["echo:x"]
        finally:
            server.stop()

    def test_http_responses_cached(self, http_config, tmp_path):
        server = ScriptedServer({})
        cache = ResponseCache(tmp_path / "cache")
        try:
            handle = AnnotatorHandle(http_config(server.url))
            prompts = [FakePrompt(text="one"), FakePrompt(text="two")]
            annotate_batch(handle, prompts, cache=cache)
            assert len(server.requests) == 2
            annotate_batch(handle, prompts, cache=cache)
            assert len(server.requests) == 2
        finally:
            server.stop()


class TestResponseCache:
    def test_keys_depend_on_model_and_prompt(self):
        a = ResponseCache.key("prompt", "model-a")
        b = ResponseCache.key("prompt", "model-b")
        c = ResponseCache.key("other prompt", "model-a")
        assert len({a, b, c}) == 3

    def test_put_is_append_only(self, tmp_path):
        cache = ResponseCache(tmp_path)
        cache.put("k" * 64, "first")
        cache.put("k" * 64, "second")
        assert cache.get("k" * 64) == "first"
