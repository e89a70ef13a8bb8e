"""Confidence levels and per-query entity annotations.

An annotation maps entity ids to a confidence level in {Low, Medium, High}.
Numerically the levels are 1-3, with 0 reserved for entities an annotator did
not select; those numbers are what persona confidence matrices are built from.
"""

import enum
import json
from dataclasses import dataclass, field


class Confidence(enum.IntEnum):
    """Annotator confidence level. Integer values feed confidence matrices."""

    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def label(self):
        return {1: "Low", 2: "Medium", 3: "High"}[int(self)]

    @classmethod
    def from_label(cls, token):
        """Parse a confidence token, case-insensitively. Raises ValueError."""
        key = token.strip().casefold()
        try:
            return {"low": cls.LOW, "medium": cls.MEDIUM, "high": cls.HIGH}[key]
        except KeyError:
            raise ValueError(f"not a confidence level: {token!r}") from None

    @classmethod
    def from_score(cls, value):
        """Map a numeric value in {1, 2, 3} back to a level; 0 has no level."""
        return cls(int(value))


@dataclass(frozen=True)
class Annotation:
    """Entity -> confidence mapping produced by one annotator for one query.

    An empty mapping is the "None" case: the annotator selected no entity.
    ``warnings`` records tolerated parse problems (unknown labels, malformed
    lines) without failing the annotation.
    """

    entities: dict = field(default_factory=dict)
    warnings: tuple = ()

    def label_set(self):
        return frozenset(self.entities)

    def __bool__(self):
        return bool(self.entities)


def render_annotation(annotation):
    """Render an annotation in the line format annotators are asked to emit.

    One "EntityId|Confidence" line per entity (sorted by entity id for
    determinism), or the single line "None" for an empty annotation.
    """
    if not annotation.entities:
        return "None"
    lines = [
        f"{entity}|{conf.label}"
        for entity, conf in sorted(annotation.entities.items())
    ]
    return "\n".join(lines)


def annotation_to_json(annotation, query_id, annotator="", persona_id=None):
    record = {
        "id": query_id,
        "annotator": annotator,
        "persona": persona_id,
        "entities": {e: c.label for e, c in sorted(annotation.entities.items())},
    }
    if annotation.warnings:
        record["warnings"] = list(annotation.warnings)
    return record


def annotation_from_json(record):
    entities = {
        e: Confidence.from_label(c) for e, c in record.get("entities", {}).items()
    }
    return Annotation(entities=entities, warnings=tuple(record.get("warnings", ())))


def write_annotation_store(path, store, annotator=""):
    """Write {query_id: Annotation} (or {(query_id, persona_id): ...}) as JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(store, key=_store_key):
            ann = store[key]
            if isinstance(key, tuple):
                qid, pid = key
            else:
                qid, pid = key, None
            fh.write(json.dumps(annotation_to_json(ann, qid, annotator, pid),
                                sort_keys=True) + "\n")


def read_annotation_store(path):
    """Read an annotation JSONL file.

    Returns {query_id: Annotation} when no record carries a persona, else
    {(query_id, persona_id): Annotation}.
    """
    flat = {}
    keyed = {}
    saw_persona = False
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            ann = annotation_from_json(record)
            pid = record.get("persona")
            if pid is not None:
                saw_persona = True
            flat[record["id"]] = ann
            keyed[(record["id"], pid)] = ann
    if saw_persona:
        return {(q, p): a for (q, p), a in keyed.items()}
    return flat


def _store_key(key):
    if isinstance(key, tuple):
        return (key[0], key[1] or "")
    return (key, "")
