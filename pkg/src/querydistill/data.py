"""Query-log ingestion, deterministic splits, and entity rebalancing."""

import hashlib
import json
import random
from dataclasses import dataclass

from .errors import DataError, MalformedLineError, MissingAnnotationError


def normalize_query(text):
    """Trim, collapse internal whitespace runs to single spaces, case-fold."""
    return " ".join(text.split()).casefold()


def query_id(text):
    """Stable id: hex digest of the normalized text."""
    digest = hashlib.sha256(normalize_query(text).encode("utf-8")).hexdigest()
    return digest[:16]


@dataclass(frozen=True)
class QueryRecord:
    """A search query with its occurrence frequency.

    Frequencies weight every "weighted" metric downstream, mirroring how
    often real users issued the query.
    """

    id: str
    text: str
    frequency: int = 1

    def __post_init__(self):
        if not self.text:
            raise DataError("query text is empty")
        if self.frequency < 1:
            raise DataError(f"frequency must be >= 1, got {self.frequency}")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    dev: tuple
    test: tuple
    seed: int

    @property
    def parts(self):
        return {"train": self.train, "dev": self.dev, "test": self.test}

    def all_records(self):
        return self.train + self.dev + self.test


def _parse_line(line, number):
    stripped = line.strip()
    if stripped.startswith("{"):
        try:
            record = json.loads(stripped)
            text, frequency = record["text"], record.get("frequency", 1)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedLineError(number, f"bad JSON record ({exc})") from exc
    else:
        parts = stripped.split("\t")
        if len(parts) != 2:
            raise MalformedLineError(number, "expected 'query<TAB>frequency'")
        text, frequency = parts
    try:
        frequency = int(frequency)
    except (TypeError, ValueError):
        raise MalformedLineError(number, f"frequency not an integer: {frequency!r}") from None
    if frequency < 1:
        raise MalformedLineError(number, f"frequency must be >= 1, got {frequency}")
    return text, frequency


def ingest_queries(source):
    """Read a query stream into deduplicated QueryRecords.

    ``source`` is an iterable of lines (an open file works). Each line is
    either "query<TAB>frequency" or a JSON object {"text": ..., "frequency": ...}.
    Records are deduplicated by normalized text with frequencies summed;
    output keeps first-seen order.
    """
    seen = {}
    order = []
    number = 0
    for number, line in enumerate(source, start=1):
        if not line.strip():
            continue
        text, frequency = _parse_line(line, number)
        normalized = normalize_query(text)
        if not normalized:
            raise MalformedLineError(number, "query text empty after normalization")
        if normalized in seen:
            seen[normalized] += frequency
        else:
            seen[normalized] = frequency
            order.append(normalized)
    if not order:
        raise DataError("no query records in input")
    return [QueryRecord(id=query_id(t), text=t, frequency=seen[t]) for t in order]


def render_queries(records):
    """Render records back to the tab-separated line format."""
    return "".join(f"{r.text}\t{r.frequency}\n" for r in records)


def read_queries(path):
    with open(path, encoding="utf-8") as fh:
        return ingest_queries(fh)


def write_queries_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "text": r.text, "frequency": r.frequency},
                                sort_keys=True) + "\n")


def read_queries_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                records.append(QueryRecord(rec["id"], rec["text"], rec["frequency"]))
    return records


def split_dataset(records, ratios, seed):
    """Deterministic train/dev/test partition of records.

    ``ratios`` is (train, dev, test), positive, summing to 1 within 1e-9.
    Records are shuffled by a seeded permutation of ids and sliced; sizes
    follow the largest-remainder rule, so each part is within one record of
    its exact fraction.
    """
    train_r, dev_r, test_r = ratios
    if min(train_r, dev_r, test_r) <= 0:
        raise DataError(f"ratios must be positive, got {ratios}")
    if abs(train_r + dev_r + test_r - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {ratios}")
    if len(records) < 3:
        raise DataError(f"need at least 3 records to split, got {len(records)}")

    ordered = sorted(records, key=lambda r: r.id)
    rng = random.Random(seed)
    rng.shuffle(ordered)

    n = len(ordered)
    exact = [n * train_r, n * dev_r, n * test_r]
    sizes = [int(x) for x in exact]
    remainders = [x - s for x, s in zip(exact, sizes)]
    for _ in range(n - sum(sizes)):
        best = max(range(3), key=lambda i: (remainders[i], -i))
        sizes[best] += 1
        remainders[best] = -1.0

    train = tuple(ordered[: sizes[0]])
    dev = tuple(ordered[sizes[0]: sizes[0] + sizes[1]])
    test = tuple(ordered[sizes[0] + sizes[1]:])
    return DatasetSplit(train=train, dev=dev, test=test, seed=seed)


def write_split_manifest(path, split):
    """JSON Lines manifest: a header carrying the seed, then one id/part row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": split.seed}) + "\n")
        for part in ("train", "dev", "test"):
            for record in split.parts[part]:
                fh.write(json.dumps({"id": record.id, "part": part}) + "\n")


def read_split_manifest(path):
    """Returns (seed, {id: part})."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        assignment = {}
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                assignment[rec["id"]] = rec["part"]
    return header["seed"], assignment


def rebalance_by_entity(records, annotations, cap_fraction=0.25, seed=0):
    """Downsample so no entity exceeds ``cap_fraction`` of entity occurrences.

    Greedy: while some entity is over the cap, drop one record chosen by a
    seeded rng from those records whose every entity is currently over the
    cap (candidates ordered by ascending frequency, ties by id, so a given
    seed always picks the same record). Records carrying any rare entity are
    never dropped, and no entity's count ever increases. Records with empty
    annotations are always kept.
    """
    if not 0 < cap_fraction <= 1:
        raise DataError(f"cap_fraction must be in (0, 1], got {cap_fraction}")
    missing = [r.id for r in records if r.id not in annotations]
    if missing:
        raise MissingAnnotationError(missing)

    rng = random.Random(seed)
    kept = set(r.id for r in records)
    by_id = {r.id: r for r in records}
    counts = {}
    total = 0
    for r in records:
        for entity in annotations[r.id].label_set():
            counts[entity] = counts.get(entity, 0) + 1
            total += 1

    while total:
        over = {e for e, c in counts.items() if c > cap_fraction * total}
        if not over:
            break
        candidates = sorted(
            (r for rid in kept
             for r in (by_id[rid],)
             if annotations[rid].label_set()
             and annotations[rid].label_set() <= over),
            key=lambda r: (r.frequency, r.id),
        )
        if not candidates:
            break
        victim = candidates[rng.randrange(len(candidates))]
        kept.remove(victim.id)
        for entity in annotations[victim.id].label_set():
            counts[entity] -= 1
            total -= 1

    return [r for r in sorted(records, key=lambda r: r.id) if r.id in kept]
