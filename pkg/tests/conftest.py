import pytest

from medtriplet.extraction import DiseaseEntry, MetaEntities
from medtriplet.ontology import default_ontology


@pytest.fixture(scope="session")
def ontology():
    return default_ontology()


def entities(spec: dict[str, tuple[set, set]]) -> MetaEntities:
    """Build MetaEntities from {disease: (adj set, dir set)}."""
    entries = tuple(
        DiseaseEntry(d, frozenset(adj), frozenset(direction))
        for d, (adj, direction) in sorted(spec.items())
    )
    return MetaEntities(entries)
