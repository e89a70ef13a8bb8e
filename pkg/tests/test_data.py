import random

import pytest

from conftest import ann
from querydistill.annotations import Annotation
from querydistill.data import (QueryRecord, ingest_queries, normalize_query,
                               query_id, rebalance_by_entity, render_queries,
                               split_dataset)
from querydistill.errors import (DataError, MalformedLineError,
                                 MissingAnnotationError)


class TestIngest:
    def test_dedupe_sums_frequencies(self):
        records = ingest_queries(["comedy movies\t5", "Comedy  Movies\t2"])
        assert len(records) == 1
        assert records[0].text == "comedy movies"
        assert records[0].frequency == 7

    def test_passthrough(self):
        records = ingest_queries(["tom hanks movies\t1"])
        assert len(records) == 1
        assert records[0].frequency == 1

    def test_missing_frequency_is_malformed(self):
        with pytest.raises(MalformedLineError) as err:
            ingest_queries(["only-text-no-frequency"])
        assert err.value.line_number == 1

    def test_json_lines_accepted(self):
        records = ingest_queries(['{"text": "french movies", "frequency": 3}'])
        assert records[0].frequency == 3

    def test_zero_records_rejected(self):
        with pytest.raises(DataError):
            ingest_queries(["", "   "])

    def test_nonpositive_frequency_rejected(self):
        with pytest.raises(MalformedLineError):
            ingest_queries(["comedy\t0"])

    def test_id_is_function_of_normalized_text(self):
        assert query_id("Comedy  Movies ") == query_id("comedy movies")

    def test_idempotent_under_rerender(self):
        rng = random.Random(11)
        words = ["comedy", "french", "movies", "tom", "hanks", "2023"]
        lines = []
        for _ in range(40):
            text = " ".join(rng.choices(words, k=rng.randint(1, 4)))
            lines.append(f"{text}\t{rng.randint(1, 9)}")
        once = ingest_queries(lines)
        twice = ingest_queries(render_queries(once).splitlines())
        assert once == twice


class TestSplit:
    def make(self, n):
        return [QueryRecord(id=f"{i:04d}", text=f"query {i}", frequency=1)
                for i in range(n)]

    def test_sizes_10_records(self):
        split = split_dataset(self.make(10), (0.7, 0.1, 0.2), seed=42)
        assert (len(split.train), len(split.dev), len(split.test)) == (7, 1, 2)

    def test_sizes_100k_records(self):
        split = split_dataset(self.make(100_000), (0.7, 0.1, 0.2), seed=0)
        assert (len(split.train), len(split.dev), len(split.test)) == \
            (70_000, 10_000, 20_000)

    def test_ratio_sum_violation(self):
        with pytest.raises(DataError, match="sum"):
            split_dataset(self.make(10), (0.5, 0.5, 0.5), seed=0)

    def test_too_small(self):
        with pytest.raises(DataError, match="at least 3"):
            split_dataset(self.make(2), (0.7, 0.1, 0.2), seed=0)

    def test_deterministic_given_seed(self):
        records = self.make(50)
        assert split_dataset(records, (0.7, 0.1, 0.2), 9) == \
            split_dataset(records, (0.7, 0.1, 0.2), 9)
        assert split_dataset(records, (0.7, 0.1, 0.2), 9) != \
            split_dataset(records, (0.7, 0.1, 0.2), 10)

    def test_partition_property(self):
        rng = random.Random(3)
        for trial in range(25):
            n = rng.randint(3, 200)
            records = self.make(n)
            a = rng.uniform(0.1, 0.8)
            b = rng.uniform(0.05, min(0.9 - a, 0.5))
            split = split_dataset(records, (a, b, 1.0 - a - b), seed=trial)
            ids = [r.id for r in split.all_records()]
            assert len(ids) == n
            assert len(set(ids)) == n
            assert set(ids) == {r.id for r in records}
            for part, ratio in zip((split.train, split.dev, split.test),
                                   (a, b, 1.0 - a - b)):
                assert abs(len(part) - n * ratio) <= 1.0


class TestRebalance:
    def make_skewed(self):
        records, annotations = [], {}
        for i in range(90):
            r = QueryRecord(id=f"g{i:03d}", text=f"genre {i}", frequency=1)
            records.append(r)
            annotations[r.id] = ann(Genre="High")
        for i in range(10):
            r = QueryRecord(id=f"s{i:03d}", text=f"sport {i}", frequency=1)
            records.append(r)
            annotations[r.id] = ann(Sport="High")
        return records, annotations

    def count_entities(self, kept, annotations):
        counts = {}
        for r in kept:
            for e in annotations[r.id].label_set():
                counts[e] = counts.get(e, 0) + 1
        return counts

    def test_cap_enforced_and_rare_kept(self):
        records, annotations = self.make_skewed()
        kept = rebalance_by_entity(records, annotations, cap_fraction=0.5, seed=1)
        counts = self.count_entities(kept, annotations)
        assert counts["Sport"] == 10
        assert counts["Genre"] <= 10

    def test_cap_one_is_noop(self):
        records, annotations = self.make_skewed()
        only_genre = [r for r in records if r.id.startswith("g")]
        kept = rebalance_by_entity(only_genre, annotations, cap_fraction=1.0)
        assert kept == sorted(only_genre, key=lambda r: r.id)

    def test_missing_annotation_listed(self):
        records, annotations = self.make_skewed()
        del annotations["g000"]
        with pytest.raises(MissingAnnotationError) as err:
            rebalance_by_entity(records, annotations)
        assert "g000" in err.value.query_ids

    def test_never_increases_counts(self):
        rng = random.Random(8)
        entities = ["A", "B", "C", "D"]
        records, annotations = [], {}
        for i in range(120):
            r = QueryRecord(id=f"q{i:03d}", text=f"query {i}",
                            frequency=rng.randint(1, 5))
            records.append(r)
            labels = rng.sample(entities, rng.randint(0, 2))
            annotations[r.id] = Annotation(
                entities={e: ann(Genre="High").entities["Genre"] for e in labels})
        before = self.count_entities(records, annotations)
        kept = rebalance_by_entity(records, annotations, cap_fraction=0.3, seed=2)
        after = self.count_entities(kept, annotations)
        for entity, count in after.items():
            assert count <= before[entity]

    def test_deterministic(self):
        records, annotations = self.make_skewed()
        a = rebalance_by_entity(records, annotations, cap_fraction=0.5, seed=4)
        b = rebalance_by_entity(records, annotations, cap_fraction=0.5, seed=4)
        assert a == b

    def test_bad_cap_rejected(self):
        records, annotations = self.make_skewed()
        with pytest.raises(DataError):
            rebalance_by_entity(records, annotations, cap_fraction=0.0)


def test_normalize_query():
    assert normalize_query("  Comedy   MOVIES ") == "comedy movies"


def test_split_manifest_round_trip(tmp_path):
    from querydistill.data import (read_split_manifest, split_dataset,
                                   write_split_manifest)
    records = [QueryRecord(id=f"{i:03d}", text=f"query {i}", frequency=1)
               for i in range(20)]
    split = split_dataset(records, (0.7, 0.1, 0.2), seed=5)
    path = tmp_path / "split.jsonl"
    write_split_manifest(path, split)
    seed, assignment = read_split_manifest(path)
    assert seed == 5
    for part in ("train", "dev", "test"):
        for record in split.parts[part]:
            assert assignment[record.id] == part
    assert len(assignment) == 20
