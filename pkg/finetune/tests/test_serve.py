import socket

import pytest
import requests

from chainworld.conformance import run_conformance_checks
from chainworld.gateway import Backend, BackendConfig
from chainworld.inference import EndpointBackend, infer_preconditions

from chainworld_finetune.serve import _ensure_port_free


class TestWireConformance:
    def test_gateway_conformance_suite_passes(self, served, toy_pairs):
        report = run_conformance_checks(
            served.base_url + "/v1",
            model_name="toy-overfit",
            probe_text=toy_pairs[0].input,
        )
        assert report.passed, report.summary()

    def test_trained_input_reproduced_verbatim_via_gateway(self, served, toy_pairs):
        backend = Backend(
            BackendConfig(
                kind="remote",
                base_url=served.base_url + "/v1",
                model_name="toy-overfit",
                timeout=30.0,
            )
        )
        for pair in toy_pairs[:5]:
            assert backend.complete(pair.input).text == pair.target

    def test_primary_inference_backend_round_trip(self, served, toy_pairs):
        """The chainworld endpoint backend gets gold preconditions back."""
        backend = EndpointBackend(
            BackendConfig(
                kind="remote",
                base_url=served.base_url + "/v1",
                model_name="toy-overfit",
                timeout=30.0,
            )
        )
        # toy pair 1 is the first step of the first toy plan
        gold = tuple(toy_pairs[0].target.splitlines())
        action = toy_pairs[0].input.split("action:\n", 1)[1].splitlines()[0]
        assert infer_preconditions(backend, action) == gold


class TestHttpSurface:
    def test_health(self, served):
        response = requests.get(served.base_url + "/health", timeout=10)
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def test_both_route_prefixes(self, served, toy_pairs):
        body = {
            "model": "toy-overfit",
            "messages": [{"role": "user", "content": toy_pairs[0].input}],
        }
        for path in ("/chat/completions", "/v1/chat/completions"):
            response = requests.post(served.base_url + path, json=body, timeout=30)
            assert response.status_code == 200
            assert response.json()["choices"][0]["message"]["content"] == toy_pairs[0].target

    def test_response_schema_fields(self, served, toy_pairs):
        body = {"messages": [{"role": "user", "content": toy_pairs[1].input}]}
        data = requests.post(
            served.base_url + "/v1/chat/completions", json=body, timeout=30
        ).json()
        assert data["object"] == "chat.completion"
        choice = data["choices"][0]
        assert choice["finish_reason"] == "stop"
        assert choice["message"]["role"] == "assistant"
        assert data["usage"]["total_tokens"] > 0

    def test_no_user_message_is_400(self, served):
        body = {"messages": [{"role": "system", "content": "hi"}]}
        response = requests.post(served.base_url + "/v1/chat/completions", json=body, timeout=10)
        assert response.status_code == 400

    def test_malformed_body_is_422(self, served):
        response = requests.post(served.base_url + "/v1/chat/completions", json={}, timeout=10)
        assert response.status_code == 422

    def test_port_in_use_raises(self, served):
        with pytest.raises(OSError, match="already in use"):
            _ensure_port_free("127.0.0.1", served.port)

    def test_free_port_passes(self):
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        _ensure_port_free("127.0.0.1", port)
