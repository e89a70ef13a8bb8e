"""The closed entity universe: definitions, ICL example lists, validation.

The registry fixes entity column order for every confidence matrix and every
classifier output vector in a run; artifacts embed ``registry_hash`` so that
misaligned columns are caught at load time instead of producing silent junk.
"""

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import RegistryError, UnknownLabelError

# Reserved sentinel: "the annotator selected no entity". Never a column.
NONE_LABEL = "None"


@dataclass(frozen=True)
class EntityDef:
    id: str
    definition: str
    icl_examples: tuple = ()

    def __post_init__(self):
        if not self.id or any(ch.isspace() for ch in self.id):
            raise RegistryError(f"entity id must be non-empty, no whitespace: {self.id!r}")
        if self.id == NONE_LABEL:
            raise RegistryError(f"entity id {NONE_LABEL!r} is reserved")
        if not self.definition.strip():
            raise RegistryError(f"entity {self.id!r} has an empty definition")
        object.__setattr__(self, "icl_examples", tuple(self.icl_examples))


@dataclass(frozen=True)
class EntityRegistry:
    entities: tuple = ()
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.entities:
            raise RegistryError("registry is empty")
        index = {}
        for pos, entity in enumerate(self.entities):
            if entity.id in index:
                raise RegistryError(f"duplicate entity id: {entity.id!r}")
            index[entity.id] = pos
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.entities)

    def __iter__(self):
        return iter(self.entities)

    def __contains__(self, entity_id):
        return entity_id in self._index

    @property
    def ids(self):
        return tuple(e.id for e in self.entities)

    def column(self, entity_id):
        """Column index of an entity; raises UnknownLabelError."""
        try:
            return self._index[entity_id]
        except KeyError:
            raise UnknownLabelError(entity_id) from None

    def get(self, entity_id):
        return self.entities[self.column(entity_id)]

    @property
    def hash(self):
        """Stable digest over the ordered entity ids (newline-joined)."""
        joined = "\n".join(self.ids).encode("utf-8")
        return hashlib.sha256(joined).hexdigest()


def load_registry(path):
    """Load a registry from a JSON Lines file.

    One record per line: {"id": ..., "definition": ..., "icl_examples": [...]}.
    Entity order equals file order.
    """
    entities = []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RegistryError(f"line {number}: not valid JSON ({exc.msg})") from exc
            if not isinstance(record, dict) or "id" not in record:
                raise RegistryError(f"line {number}: record must be an object with an 'id'")
            entities.append(EntityDef(
                id=str(record["id"]),
                definition=str(record.get("definition", "")),
                icl_examples=tuple(record.get("icl_examples", ())),
            ))
    return EntityRegistry(entities=tuple(entities))


def default_registry():
    """The shipped 22-entity media-search registry."""
    ref = resources.files("querydistill.resources") / "registry_default.jsonl"
    with resources.as_file(ref) as path:
        return load_registry(path)


def validate_label(registry, label):
    """Resolve a label string to a registry entity id.

    Exact match after trimming surrounding whitespace; the reserved "None"
    sentinel passes through. Any other unknown string raises
    UnknownLabelError. All fuzzier normalization (case folding, repair of
    LLM typos) belongs to the response parser, not here.
    """
    trimmed = label.strip()
    if trimmed == NONE_LABEL:
        return NONE_LABEL
    if trimmed in registry:
        return trimmed
    raise UnknownLabelError(label)
