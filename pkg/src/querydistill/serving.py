"""Line-protocol serving for the distilled classifier.

One UTF-8 query per request line; one JSON object per response line:
{"labels": [{"entity": ..., "prob": ...}], "latency_us": ...}. Malformed
requests produce an error object and the connection stays open. Works over
stdio or a TCP socket; requests on one connection are answered in order.
"""

import json
import socketserver
import sys
import time

from .classifier import apply_thresholds, heads_forward, load_classifier, _sigmoid
from .errors import ModelError


class ServeState:
    """Loaded model plus a single shared encoder instance."""

    def __init__(self, model_path, thresholds_path=None):
        self.model = load_classifier(model_path)
        if thresholds_path:
            with open(thresholds_path, encoding="utf-8") as fh:
                payload = json.load(fh)
            if payload.get("registry_hash") != self.model.registry_hash:
                raise ModelError(
                    "thresholds file registry_hash does not match the model")
            thresholds = self.model.thresholds.copy()
            for col, entity in enumerate(self.model.entity_ids):
                if entity in payload["thresholds"]:
                    t = float(payload["thresholds"][entity])
                    thresholds[col] = min(max(t, 1e-9), 1.0 - 1e-9)
            self.model.thresholds = thresholds
        self.backend = self.model.backend()

    def respond(self, line):
        """JSON response string for one request line."""
        started = time.perf_counter_ns()
        query = line.strip()
        if not query:
            return json.dumps({"error": "empty query"})
        try:
            x = self.backend.encode(query)
        except Exception as exc:
            return json.dumps({"error": str(exc)})
        logits, _ = heads_forward(self.model, x[None, :])
        probs = _sigmoid(logits[0])
        selected = apply_thresholds(self.model, probs)
        labels = [
            {"entity": entity, "prob": float(prob)}
            for entity, prob in zip(self.model.entity_ids, probs)
            if entity in selected
        ]
        labels.sort(key=lambda item: -item["prob"])
        latency_us = (time.perf_counter_ns() - started) // 1000
        return json.dumps({"labels": labels, "latency_us": latency_us})


def serve_stdio(state, stdin=None, stdout=None):
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        stdout.write(state.respond(line) + "\n")
        stdout.flush()


def serve_tcp(state, port, host="127.0.0.1"):
    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                response = state.respond(raw.decode("utf-8", errors="replace"))
                self.wfile.write(response.encode("utf-8") + b"\n")
                self.wfile.flush()

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server((host, port), Handler)
    return server
