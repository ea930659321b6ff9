"""Line-delimited corpus and entity-record files.

Every file starts with a single header record carrying its schema
version; data records follow one per line, UTF-8, fixed field order.

corpus/v1 record:   {"id": ..., "text": ..., "image": path-or-null}
entities/v1 record: {"id": ..., "entries": [{"disease", "adj", "dir"}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .extraction import MetaEntities, Report

CORPUS_SCHEMA = "corpus/v1"
ENTITIES_SCHEMA = "entities/v1"


class DataError(ValueError):
    """Corpus or record file violates its documented schema."""


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    text: str
    image: Path | None = None

    def report(self) -> Report:
        return Report(self.id, self.text)


@dataclass
class Corpus:
    """Validated in-memory index of a corpus file."""

    path: Path
    records: dict[str, CorpusRecord]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[CorpusRecord]:
        return iter(self.records.values())

    def __getitem__(self, sample_id: str) -> CorpusRecord:
        return self.records[sample_id]


def _read_lines(path: Path, schema: str) -> Iterator[tuple[int, dict]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty file, expected a {schema} header record")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: invalid JSON in header: {exc}") from exc
    if header.get("schema") != schema:
        raise DataError(f"{path}:1: expected schema {schema!r}, got {header.get('schema')!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def ingest(path: str | Path, require_images: bool = False) -> Corpus:
    """Load and validate a corpus file into an id-indexed handle."""
    path = Path(path)
    records: dict[str, CorpusRecord] = {}
    for lineno, rec in _read_lines(path, CORPUS_SCHEMA):
        for field_name in ("id", "text"):
            if field_name not in rec:
                raise DataError(f"{path}:{lineno}: record missing {field_name!r} field")
        sample_id = str(rec["id"])
        if sample_id in records:
            raise DataError(f"{path}:{lineno}: duplicate id {sample_id!r}")
        if not str(rec["text"]).strip():
            raise DataError(f"{path}:{lineno}: empty text for id {sample_id!r}")
        image = rec.get("image")
        image_path: Path | None = None
        if image is not None:
            image_path = Path(image)
            if not image_path.is_absolute():
                image_path = path.parent / image_path
        if require_images:
            if image_path is None:
                raise DataError(f"{path}:{lineno}: id {sample_id!r} has no image")
            if not image_path.exists():
                raise DataError(f"{path}:{lineno}: missing image for id {sample_id!r}: {image_path}")
        records[sample_id] = CorpusRecord(sample_id, str(rec["text"]), image_path)
    return Corpus(path=path, records=records)


def write_corpus(path: str | Path, records: Iterable[CorpusRecord]) -> None:
    lines = [json.dumps({"schema": CORPUS_SCHEMA})]
    for rec in records:
        lines.append(
            json.dumps(
                {"id": rec.id, "text": rec.text, "image": None if rec.image is None else str(rec.image)}
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_entities(path: str | Path, items: Iterable[tuple[str, MetaEntities]]) -> None:
    lines = [json.dumps({"schema": ENTITIES_SCHEMA})]
    for sample_id, entities in items:
        record = {"id": sample_id}
        record.update(entities.to_record())
        lines.append(json.dumps(record))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_entities(path: str | Path) -> list[tuple[str, MetaEntities]]:
    path = Path(path)
    items: list[tuple[str, MetaEntities]] = []
    seen: set[str] = set()
    for lineno, rec in _read_lines(path, ENTITIES_SCHEMA):
        if "id" not in rec or "entries" not in rec:
            raise DataError(f"{path}:{lineno}: record missing 'id' or 'entries'")
        sample_id = str(rec["id"])
        if sample_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {sample_id!r}")
        seen.add(sample_id)
        items.append((sample_id, MetaEntities.from_record(rec)))
    return items
