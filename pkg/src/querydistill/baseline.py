"""Lexical-matching baseline annotator.

A gazetteer maps entities to short phrases; a query gets an entity whenever
one of its phrases occurs as a contiguous token run in the normalized query.
Token-boundary matching, not raw substrings, so "art" never fires inside
"start". Every match is emitted at High confidence: the baseline has no
confidence notion of its own, and the uniform mapping keeps its annotations
comparable with LLM output.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

from .annotations import Annotation, Confidence
from .data import normalize_query


@dataclass(frozen=True)
class Gazetteer:
    """Per-entity sets of normalized phrases (1-5 tokens each)."""

    phrases: dict = field(default_factory=dict)

    def __post_init__(self):
        normalized = {}
        for entity, phrase_list in self.phrases.items():
            cleaned = set()
            for phrase in phrase_list:
                tokens = tuple(normalize_query(phrase).split())
                if not 1 <= len(tokens) <= 5:
                    raise ValueError(
                        f"gazetteer phrase must be 1-5 tokens: {phrase!r}")
                cleaned.add(tokens)
            normalized[entity] = frozenset(cleaned)
        object.__setattr__(self, "phrases", normalized)

    @property
    def entities(self):
        return sorted(self.phrases)

    def match(self, text):
        """Entity ids whose phrases occur as contiguous token runs in text."""
        tokens = normalize_query(text).split()
        windows = set()
        for size in range(1, 6):
            for start in range(len(tokens) - size + 1):
                windows.add(tuple(tokens[start:start + size]))
        return {
            entity
            for entity, phrase_set in self.phrases.items()
            if phrase_set & windows
        }

    def phrase_map(self):
        """{phrase string: entity} over all entries (phrases joined by spaces)."""
        return {
            " ".join(tokens): entity
            for entity, phrase_set in self.phrases.items()
            for tokens in phrase_set
        }


def load_gazetteer(path):
    """Read a JSON Lines gazetteer: {"entity": ..., "phrases": [...]} per line.

    Repeated entity lines merge their phrase sets.
    """
    merged = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            merged.setdefault(record["entity"], []).extend(record["phrases"])
    return Gazetteer(phrases=merged)


def default_gazetteer():
    """The shipped demonstrative dictionary for the default registry."""
    ref = resources.files("querydistill.resources") / "gazetteer_default.jsonl"
    with resources.as_file(ref) as path:
        return load_gazetteer(path)


def write_gazetteer(path, gazetteer):
    with open(path, "w", encoding="utf-8") as fh:
        for entity in gazetteer.entities:
            phrases = sorted(" ".join(t) for t in gazetteer.phrases[entity])
            fh.write(json.dumps({"entity": entity, "phrases": phrases}) + "\n")


def lexical_match(gazetteer, text):
    """Annotate one query by dictionary lookup; all matches are High."""
    return Annotation(entities={
        entity: Confidence.HIGH for entity in gazetteer.match(text)
    })
