"""Synthetic media-search corpora for offline experiments and tests.

Generates a phrase gazetteer over a small entity universe, queries that
weave those phrases into varied surface templates (the paraphrase noise),
and the matching gold annotations. Everything is seeded, so corpora are
exactly reproducible. The filler vocabulary is disjoint from every
gazetteer phrase, so a query's gold labels are exactly the entities of the
phrases planted in it.
"""

import random

from .annotations import Annotation, Confidence
from .baseline import Gazetteer
from .data import ingest_queries
from .taxonomy import EntityDef, EntityRegistry

# 10 entities x 10 phrases = the standard 100-phrase universe. Phrases are
# unique across entities and never appear in templates or fillers.
PHRASE_BANK = {
    "Genre": ["comedy", "horror", "romantic comedy", "thriller", "action",
              "drama", "science fiction", "animated musical", "noir", "western"],
    "Sport": ["football", "basketball", "tennis grand slam", "cricket",
              "boxing", "formula racing", "olympics", "ice hockey",
              "marathon", "surfing"],
    "Holiday": ["christmas", "thanksgiving", "easter", "halloween",
                "valentines day", "new years eve", "hanukkah", "diwali",
                "fourth of july", "mothers day"],
    "AudioLanguage": ["french", "spanish", "hindi", "korean", "japanese",
                      "german", "italian", "portuguese", "arabic", "bangla"],
    "StreamingService": ["netflix", "hulu", "peacock", "paramount plus",
                         "disney plus", "apple tv", "amazon prime", "max",
                         "crunchyroll", "tubi"],
    "CastAndCrew": ["tom hanks", "meryl streep", "denzel washington",
                    "scarlett johansson", "keanu reeves", "viola davis",
                    "ryan gosling", "emma stone", "idris elba", "cate blanchett"],
    "Franchise": ["star wars", "james bond", "jurassic park", "fast saga",
                  "mission impossible", "harry potter", "the matrix",
                  "john wick", "pirates of the caribbean", "shrek"],
    "Theme": ["time travel", "heist", "coming of age", "post apocalyptic",
              "courtroom", "underdog story", "space exploration",
              "talking animals", "haunted house", "road trip"],
    "Character": ["batman", "sherlock holmes", "spider man", "wonder woman",
                  "james t kirk", "lara croft", "indiana jones", "godzilla",
                  "hercule poirot", "king kong"],
    "FreeContent": ["free movies", "free shows", "no subscription",
                    "watch for free", "free with ads", "free kids content",
                    "free documentaries", "free classics", "free live tv",
                    "free trials"],
}

_TEMPLATES_ONE = [
    "{a}", "{a} movies", "{a} shows", "watch {a}", "best {a}",
    "{a} to stream", "top {a} tonight", "stream {a} now", "good {a} series",
    "{a} full episodes", "find {a}", "{a} online", "something like {a}",
    "play {a}", "{a} collection", "i want {a}", "{a} picks", "show me {a}",
]
_TEMPLATES_TWO = [
    "{a} {b}", "{a} {b} movies", "best {a} {b}", "watch {a} {b} tonight",
    "{a} and {b}", "{b} {a} shows", "find {a} {b}", "{a} {b} online",
]
# disjoint from every gazetteer phrase token sequence
_FILLERS = ["tonight", "now", "please", "hd", "4k", "latest", "trending",
            "weekend", "evening", "maybe"]


def synth_registry(entities=None):
    """Registry over the synthetic entity universe, with ICL examples."""
    names = list(entities) if entities else list(PHRASE_BANK)
    defs = []
    for name in names:
        examples = tuple(PHRASE_BANK.get(name, ())[:4])
        defs.append(EntityDef(
            id=name,
            definition=f"The query refers to {name} content.",
            icl_examples=examples,
        ))
    return EntityRegistry(entities=tuple(defs))


def synth_gazetteer(entities=None, phrases_per_entity=10):
    names = list(entities) if entities else list(PHRASE_BANK)
    return Gazetteer(phrases={
        name: PHRASE_BANK[name][:phrases_per_entity] for name in names
    })


def impoverished_gazetteer(gazetteer, keep_fraction, seed=0):
    """Random per-entity subset of phrases: the weak lexical baseline."""
    rng = random.Random(seed)
    kept = {}
    for entity in gazetteer.entities:
        phrases = sorted(" ".join(t) for t in gazetteer.phrases[entity])
        k = max(0, round(len(phrases) * keep_fraction))
        kept[entity] = rng.sample(phrases, k) if k else []
    return Gazetteer(phrases={e: p for e, p in kept.items() if p})


def ambiguity_table(gazetteer, fraction, seed=0):
    """Mark a fraction of phrases as ambiguous: without ICL examples in the
    prompt, the mock annotator resolves them to the next entity over."""
    rng = random.Random(seed)
    entities = gazetteer.entities
    all_phrases = sorted(
        (" ".join(tokens), entity)
        for entity in entities
        for tokens in gazetteer.phrases[entity]
    )
    chosen = rng.sample(all_phrases, round(len(all_phrases) * fraction))
    table = {}
    for phrase, entity in chosen:
        wrong = entities[(entities.index(entity) + 1) % len(entities)]
        table[phrase] = wrong
    return table


def synth_queries(gazetteer, count, seed=0, two_phrase_rate=0.2,
                  max_frequency=5):
    """Generate query lines and their gold label sets.

    Returns (records, gold) where records come from ``ingest_queries`` over
    the generated lines (so duplicates collapse with summed frequencies)
    and gold maps query id -> Annotation over the generating entities.
    """
    rng = random.Random(seed)
    entities = gazetteer.entities
    phrase_lists = {
        e: sorted(" ".join(t) for t in gazetteer.phrases[e]) for e in entities
    }
    lines = []
    gold_by_text = {}
    for _ in range(count):
        if len(entities) > 1 and rng.random() < two_phrase_rate:
            first, second = rng.sample(entities, 2)
            a = rng.choice(phrase_lists[first])
            b = rng.choice(phrase_lists[second])
            text = rng.choice(_TEMPLATES_TWO).format(a=a, b=b)
            labels = {first, second}
        else:
            entity = rng.choice(entities)
            a = rng.choice(phrase_lists[entity])
            text = rng.choice(_TEMPLATES_ONE).format(a=a)
            labels = {entity}
        if rng.random() < 0.35:
            text = text + " " + rng.choice(_FILLERS)
        frequency = rng.randint(1, max_frequency)
        lines.append(f"{text}\t{frequency}")
        gold_by_text.setdefault(" ".join(text.split()).casefold(), set()).update(labels)

    records = ingest_queries(lines)
    gold = {}
    for record in records:
        labels = gold_by_text[record.text]
        gold[record.id] = Annotation(
            entities={e: Confidence.HIGH for e in sorted(labels)})
    return records, gold
