import pytest

from querydistill.annotations import Annotation, Confidence
from querydistill.baseline import Gazetteer
from querydistill.taxonomy import EntityDef, EntityRegistry, default_registry


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture
def tiny_registry():
    return EntityRegistry(entities=(
        EntityDef(id="Genre", definition="a content genre",
                  icl_examples=("comedy", "horror")),
        EntityDef(id="Sport", definition="sports content",
                  icl_examples=("football",)),
        EntityDef(id="IntentMovie", definition="wants movies"),
    ))


@pytest.fixture
def tiny_gazetteer():
    return Gazetteer(phrases={
        "Genre": ["comedy", "horror"],
        "Sport": ["football", "tennis"],
        "IntentMovie": ["movies", "movie"],
    })


def ann(**entities):
    return Annotation(entities={
        e: Confidence.from_label(level) for e, level in entities.items()
    })
