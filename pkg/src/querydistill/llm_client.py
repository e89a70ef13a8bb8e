"""Uniform annotator interface: HTTP endpoints and a deterministic mock.

Both annotator kinds sit behind ``annotate_batch``: responses come back
positionally aligned with the prompts, transient failures are retried with
exponential backoff, permanent failures become failure records instead of
aborting the batch, and every successful response lands in a content-
addressed on-disk cache keyed by digest(prompt text + model name). A
completed batch re-run against the same cache performs zero annotator calls.

The mock annotator is a gazetteer lookup with optional persona biases,
seeded confidence noise, and prompt-section awareness (entries marked
ambiguous resolve correctly only when the prompt carries in-context
examples). It renders responses in the same line format real endpoints are
instructed to use, so the whole pipeline can run offline.
"""

import hashlib
import json
import os
import random
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .annotations import Annotation, Confidence, render_annotation
from .data import normalize_query
from .errors import AnnotatorConfigError
from .personas import Persona

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class HttpEndpointConfig:
    url: str
    model: str
    auth_env: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    in_flight_limit: int = 4
    requests_per_second: float = 2.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise AnnotatorConfigError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise AnnotatorConfigError(f"max_retries must be >= 0, got {self.max_retries}")


@dataclass(frozen=True)
class MockConfig:
    """Deterministic fake annotator.

    ``persona_bias`` maps persona id -> {"add": {entity: level}, "remove":
    [entity, ...]}. ``ambiguous`` maps a normalized gazetteer phrase to the
    wrong entity the mock emits when the prompt lacks ICL examples.
    """

    gazetteer: object = None
    seed: int = 0
    noise_rate: float = 0.0
    persona_bias: dict = field(default_factory=dict)
    ambiguous: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.noise_rate < 1:
            raise AnnotatorConfigError(
                f"noise_rate must be in [0, 1), got {self.noise_rate}")


@dataclass
class ClientStats:
    calls: int = 0
    cache_hits: int = 0
    failures: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count(self, attr, n=1):
        with self._lock:
            setattr(self, attr, getattr(self, attr) + n)


class AnnotatorHandle:
    """One annotator (HTTP endpoint or mock) plus its call statistics."""

    def __init__(self, config):
        if isinstance(config, HttpEndpointConfig):
            self.kind = "http"
        elif isinstance(config, MockConfig):
            self.kind = "mock"
        else:
            raise AnnotatorConfigError(f"unsupported annotator config: {config!r}")
        self.config = config
        self.stats = ClientStats()

    @property
    def model_name(self):
        if self.kind == "http":
            return self.config.model
        digest = hashlib.sha256(json.dumps({
            "seed": self.config.seed,
            "noise_rate": self.config.noise_rate,
            "persona_bias": self.config.persona_bias,
            "ambiguous": self.config.ambiguous,
        }, sort_keys=True).encode("utf-8")).hexdigest()
        return f"mock-{digest[:12]}"


def mock_handle(gazetteer, seed=0, noise_rate=0.0, persona_bias=None, ambiguous=None):
    return AnnotatorHandle(MockConfig(
        gazetteer=gazetteer,
        seed=seed,
        noise_rate=noise_rate,
        persona_bias=persona_bias or {},
        ambiguous={normalize_query(k): v for k, v in (ambiguous or {}).items()},
    ))


@dataclass(frozen=True)
class AnnotationFailure:
    index: int
    error: str
    attempts: int = 0


class ResponseCache:
    """Append-only content-addressed cache: one file per response digest."""

    def __init__(self, directory):
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(prompt_text, model_name):
        data = model_name.encode("utf-8") + b"\x00" + prompt_text.encode("utf-8")
        return hashlib.sha256(data).hexdigest()

    def _path(self, key):
        return os.path.join(self.directory, key + ".txt")

    def get(self, key):
        try:
            with open(self._path(key), encoding="utf-8") as fh:
                return fh.read()
        except FileNotFoundError:
            return None

    def put(self, key, text):
        path = self._path(key)
        with self._lock:
            if os.path.exists(path):
                return
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".part")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)


class RateLimiter:
    """Serializes request starts to at most ``rate`` per second."""

    def __init__(self, rate):
        self._interval = 1.0 / rate if rate > 0 else 0.0
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def wait(self):
        if not self._interval:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_slot)
            self._next_slot = slot + self._interval
        delay = slot - now
        if delay > 0:
            time.sleep(delay)


# ---------------------------------------------------------------------------
# Mock annotator
# ---------------------------------------------------------------------------

_LEVELS = (Confidence.LOW, Confidence.MEDIUM, Confidence.HIGH)


def _matched_phrases(gazetteer, text):
    """(phrase string, entity) pairs whose phrase occurs in the text."""
    tokens = normalize_query(text).split()
    windows = set()
    for size in range(1, 6):
        for start in range(len(tokens) - size + 1):
            windows.add(tuple(tokens[start:start + size]))
    pairs = []
    for entity in sorted(gazetteer.phrases):
        for phrase in gazetteer.phrases[entity]:
            if phrase in windows:
                pairs.append((" ".join(phrase), entity))
    return pairs


def mock_annotate(handle, query, persona=None, sections=()):
    """Deterministic fake response for one query.

    Labels come from gazetteer lookup over the normalized query; entries in
    the ambiguity table are mislabeled unless the prompt included an "icl"
    section; persona biases then add (at the configured level) or remove
    entities; finally, with probability noise_rate (seeded per query and
    persona) one label's confidence is moved to a different level. The
    result is rendered in the standard response line format.
    """
    config = handle.config
    persona_id = persona.id if isinstance(persona, Persona) else (persona or "")
    icl_present = "icl" in sections

    labels = {}
    for phrase, entity in _matched_phrases(config.gazetteer, query):
        if not icl_present and phrase in config.ambiguous:
            entity = config.ambiguous[phrase]
        if entity is not None:
            labels[entity] = Confidence.HIGH

    bias = config.persona_bias.get(persona_id, {})
    for entity, level in sorted(bias.get("add", {}).items()):
        labels[entity] = (Confidence.from_label(level)
                          if isinstance(level, str) else Confidence(level))
    for entity in bias.get("remove", ()):
        labels.pop(entity, None)

    if config.noise_rate > 0 and labels:
        rng = random.Random(f"{config.seed}:{normalize_query(query)}:{persona_id}")
        if rng.random() < config.noise_rate:
            victim = rng.choice(sorted(labels))
            others = [lv for lv in _LEVELS if lv != labels[victim]]
            labels[victim] = rng.choice(others)

    return render_annotation(Annotation(entities=labels))


_QUERY_LINE = re.compile(r"^Query:\s*(.*\S)\s*$", re.MULTILINE)


def _prompt_fields(prompt):
    """Query/persona/sections from a PromptText, or best effort from text."""
    if hasattr(prompt, "query"):
        return prompt.query, prompt.persona_id, tuple(prompt.sections)
    text = str(prompt)
    match = None
    for match in _QUERY_LINE.finditer(text):
        pass
    return (match.group(1) if match else text), "", ()


# ---------------------------------------------------------------------------
# HTTP annotator
# ---------------------------------------------------------------------------

def _http_call(handle, prompt_text, limiter, session):
    config = handle.config
    headers = {}
    if config.auth_env:
        headers["Authorization"] = f"Bearer {os.environ[config.auth_env]}"
    last_error = "no attempt made"
    attempts = 0
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff * (2 ** (attempt - 1)))
        limiter.wait()
        attempts += 1
        handle.stats.count("calls")
        try:
            response = session.post(
                config.url,
                json={"model": config.model, "prompt": prompt_text},
                headers=headers,
                timeout=config.timeout,
            )
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
            continue
        if response.status_code == 200:
            return response.text, attempts, None
        last_error = f"status {response.status_code}"
        if response.status_code not in RETRYABLE_STATUSES:
            return None, attempts, last_error
    return None, attempts, last_error


def annotate_batch(handle, prompts, cache=None):
    """Annotate prompts; returns responses aligned with the prompt order.

    Each element is either the raw response string or an AnnotationFailure.
    Successful responses are written to ``cache`` (when given) and served
    from it on re-runs without touching the annotator.
    """
    if not prompts:
        raise ValueError("annotate_batch got no prompts")
    if handle.kind == "http" and handle.config.auth_env \
            and handle.config.auth_env not in os.environ:
        raise AnnotatorConfigError(
            f"auth env var {handle.config.auth_env!r} is not set")

    model_name = handle.model_name
    results = [None] * len(prompts)
    pending = []
    for index, prompt in enumerate(prompts):
        text = prompt.text if hasattr(prompt, "text") else str(prompt)
        key = ResponseCache.key(text, model_name)
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            handle.stats.count("cache_hits")
            results[index] = cached
        else:
            pending.append((index, prompt, text, key))

    if not pending:
        return results

    if handle.kind == "mock":
        for index, prompt, text, key in pending:
            query, persona_id, sections = _prompt_fields(prompt)
            handle.stats.count("calls")
            response = mock_annotate(handle, query, persona_id, sections)
            if cache is not None:
                cache.put(key, response)
            results[index] = response
        return results

    limiter = RateLimiter(handle.config.requests_per_second)
    session = requests.Session()

    def worker(item):
        index, _, text, key = item
        response, attempts, error = _http_call(handle, text, limiter, session)
        if error is not None:
            handle.stats.count("failures")
            return index, AnnotationFailure(index=index, error=error, attempts=attempts)
        if cache is not None:
            cache.put(key, response)
        return index, response

    workers = max(1, handle.config.in_flight_limit)
    if workers == 1 or len(pending) == 1:
        outcomes = [worker(item) for item in pending]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(worker, pending))
    for index, outcome in outcomes:
        results[index] = outcome
    return results
