"""Word ontology: categorized synsets driving entity recognition.

The ontology holds five categories: disease, adjective and direction
synsets (canonical label plus surface variants), and splitter and deleter
token sets. Everything is stored pre-lemmatized, so matching against
lemmatized report text is plain tuple comparison.

File format (UTF-8, human-editable)::

    # comment
    [diseases]
    edema = [edema, oedema]
    pleural effusion = [pleural effusion, effusion]
    [adjectives]
    mild = [mild, slight]
    [directions]
    left = [left, left sided]
    [splitters]
    and
    [deleters]
    comparison

Synset sections take ``canonical = [variant, ...]`` entries; splitter and
deleter sections take one bare token per line. Section order is free;
missing sections mean empty categories.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .lemma import SENTENCE_BREAK, lemmatize

SECTIONS = ("diseases", "adjectives", "directions", "splitters", "deleters")
_SYNSET_SECTIONS = ("diseases", "adjectives", "directions")


class OntologyError(ValueError):
    """Malformed ontology file or invariant violation; names the offender."""


@dataclass(frozen=True)
class Synset:
    """A canonical label with its lemmatized surface variants."""

    canonical: str
    variants: frozenset[str]

    def __post_init__(self) -> None:
        if self.canonical not in self.variants:
            raise OntologyError(f"canonical {self.canonical!r} missing from its variants")


@dataclass(frozen=True)
class Ontology:
    """Immutable after construction; safe for concurrent readers."""

    diseases: tuple[Synset, ...]
    adjectives: tuple[Synset, ...]
    directions: tuple[Synset, ...]
    splitters: frozenset[str]
    deleters: frozenset[str]

    @property
    def disease_labels(self) -> frozenset[str]:
        return frozenset(s.canonical for s in self.diseases)


def _lemma_phrase(raw: str, where: str) -> str:
    tokens = lemmatize(raw)
    if not tokens:
        raise OntologyError(f"empty entry in {where}: {raw!r}")
    if SENTENCE_BREAK in tokens:
        raise OntologyError(f"sentence punctuation inside entry in {where}: {raw!r}")
    return " ".join(tokens)


def _build_synsets(entries: list[tuple[str, list[str]]], section: str) -> tuple[Synset, ...]:
    synsets: dict[str, set[str]] = {}
    for canonical_raw, variants_raw in entries:
        canonical = _lemma_phrase(canonical_raw, section)
        if canonical in synsets:
            raise OntologyError(f"duplicate canonical {canonical!r} in [{section}]")
        variants = {canonical}
        for v in variants_raw:
            variants.add(_lemma_phrase(v, f"[{section}] {canonical}"))
        synsets[canonical] = variants
    return tuple(
        Synset(canonical, frozenset(variants))
        for canonical, variants in sorted(synsets.items())
    )


def _build_tokens(entries: list[str], section: str) -> frozenset[str]:
    tokens: set[str] = set()
    for raw in entries:
        lemma = _lemma_phrase(raw, section)
        if " " in lemma:
            raise OntologyError(f"multi-word token in [{section}]: {raw!r}")
        tokens.add(lemma)
    return frozenset(tokens)


def build_ontology(
    diseases: list[tuple[str, list[str]]] = (),
    adjectives: list[tuple[str, list[str]]] = (),
    directions: list[tuple[str, list[str]]] = (),
    splitters: list[str] = (),
    deleters: list[str] = (),
) -> Ontology:
    """Lemmatize, validate and freeze the five categories."""
    ont = Ontology(
        diseases=_build_synsets(list(diseases), "diseases"),
        adjectives=_build_synsets(list(adjectives), "adjectives"),
        directions=_build_synsets(list(directions), "directions"),
        splitters=_build_tokens(list(splitters), "splitters"),
        deleters=_build_tokens(list(deleters), "deleters"),
    )
    clash = ont.splitters & ont.deleters
    if clash:
        raise OntologyError(f"token in both [splitters] and [deleters]: {sorted(clash)[0]!r}")
    return ont


def parse_ontology(text: str, source: str = "<string>") -> Ontology:
    """Parse the sectioned text format; errors carry line numbers."""
    synset_entries: dict[str, list[tuple[str, list[str]]]] = {s: [] for s in _SYNSET_SECTIONS}
    token_entries: dict[str, list[str]] = {"splitters": [], "deleters": []}
    section: str | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in SECTIONS:
                raise OntologyError(f"{source}:{lineno}: unknown section [{name}]")
            section = name
            continue
        if section is None:
            raise OntologyError(f"{source}:{lineno}: entry before any section header")
        if section in _SYNSET_SECTIONS:
            if "=" not in line:
                raise OntologyError(f"{source}:{lineno}: expected 'canonical = [variants]'")
            canonical, _, rhs = line.partition("=")
            rhs = rhs.strip()
            if not (rhs.startswith("[") and rhs.endswith("]")):
                raise OntologyError(f"{source}:{lineno}: variant list must be bracketed")
            variants = [v.strip() for v in rhs[1:-1].split(",") if v.strip()]
            synset_entries[section].append((canonical.strip(), variants))
        else:
            if "=" in line:
                raise OntologyError(f"{source}:{lineno}: [{section}] takes bare tokens")
            token_entries[section].append(line)
    return build_ontology(
        diseases=synset_entries["diseases"],
        adjectives=synset_entries["adjectives"],
        directions=synset_entries["directions"],
        splitters=token_entries["splitters"],
        deleters=token_entries["deleters"],
    )


def load_ontology(path: str | Path) -> Ontology:
    path = Path(path)
    return parse_ontology(path.read_text(encoding="utf-8"), source=str(path))


def serialize_ontology(ont: Ontology) -> str:
    """Canonical serialization: fixed section order, entries sorted."""
    lines: list[str] = []
    for section, synsets in (
        ("diseases", ont.diseases),
        ("adjectives", ont.adjectives),
        ("directions", ont.directions),
    ):
        lines.append(f"[{section}]")
        for s in sorted(synsets, key=lambda s: s.canonical):
            lines.append(f"{s.canonical} = [{', '.join(sorted(s.variants))}]")
        lines.append("")
    for section, tokens in (("splitters", ont.splitters), ("deleters", ont.deleters)):
        lines.append(f"[{section}]")
        lines.extend(sorted(tokens))
        lines.append("")
    return "\n".join(lines)


def save_ontology(ont: Ontology, path: str | Path) -> None:
    Path(path).write_text(serialize_ontology(ont), encoding="utf-8")


@lru_cache(maxsize=1)
def default_ontology() -> Ontology:
    """The shipped default: 12 diseases, 40 adjectives, 4 directions,
    6 splitters, 16 deleters. The adjective/splitter/deleter lists are a
    documented representative curation; supply a file for custom lexicons.
    """
    text = resources.files("medtriplet.data").joinpath("default_ontology.txt").read_text("utf-8")
    return parse_ontology(text, source="default_ontology.txt")
