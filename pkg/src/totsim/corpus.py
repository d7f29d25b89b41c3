"""Corpus ingestion, language partitioning, and candidate filtering.

A corpus is a JSON Lines file, one article per line, with keys ``id``,
``title``, ``text`` and optional ``views``, ``aliases``, ``en_id``, and
``instance_of``.  Documents in a non-English corpus are partitioned by
whether their ``en_id`` resolves to a document in the English corpus:
resolvable links go to the bilingual partition, everything else is
monolingual.  Downstream sampling draws from partition pools that were
first filtered by popularity and article length and then labeled with a
domain derived from ``instance_of`` metadata.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CorpusError

logger = logging.getLogger(__name__)

__all__ = [
    "Partition",
    "DomainLabel",
    "Document",
    "Corpus",
    "ingest_corpus",
    "partition_corpus",
    "filter_by_popularity",
    "filter_by_length",
    "load_domain_mapping",
    "default_domain_mapping",
    "assign_domain",
    "DEFAULT_TOP_FRACTION",
    "DEFAULT_MIN_CHARS",
]

DEFAULT_TOP_FRACTION = 0.2
DEFAULT_MIN_CHARS = 1000


class Partition(str, Enum):
    """Which corpus slice a document belongs to for sampling purposes."""

    MONOLINGUAL = "monolingual"
    BILINGUAL = "bilingual"
    FULL = "full"

    @property
    def initial(self) -> str:
        return self.value[0]

    @classmethod
    def from_initial(cls, initial: str) -> "Partition":
        for member in cls:
            if member.initial == initial:
                return member
        raise CorpusError(f"unknown partition initial {initial!r}")


class DomainLabel(str, Enum):
    MOVIES = "Movies"
    PEOPLE = "People"
    GENERAL = "General"


@dataclass(frozen=True)
class Document:
    """One article: identifier, display names, body text, and metadata."""

    doc_id: str
    title: str
    body: str
    language: str
    aliases: tuple[str, ...] = ()
    page_views: int = 0
    en_link: str | None = None
    instance_of: tuple[str, ...] = ()

    @property
    def length_chars(self) -> int:
        return len(self.body)


class Corpus:
    """An in-memory document collection with unique ids.

    Iteration order is ascending ``doc_id`` regardless of input order, so
    every traversal of the same corpus is reproducible.
    """

    def __init__(self, language: str, documents: Iterable[Document]):
        self.language = language
        self._docs: dict[str, Document] = {}
        for doc in documents:
            if doc.doc_id in self._docs:
                raise CorpusError(f"duplicate document id {doc.doc_id!r}")
            self._docs[doc.doc_id] = doc
        self._order = sorted(self._docs)

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __iter__(self) -> Iterator[Document]:
        for doc_id in self._order:
            yield self._docs[doc_id]

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise CorpusError(f"unknown document id {doc_id!r} in {self.language} corpus") from None


def _parse_record(raw: dict, language: str, where: str) -> Document:
    for key in ("id", "title", "text"):
        if key not in raw:
            raise CorpusError(f"{where}: missing required key {key!r}")
    doc_id = raw["id"]
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusError(f"{where}: document id must be a non-empty string")
    if not isinstance(raw["title"], str):
        raise CorpusError(f"{where}: title must be a string")
    if not isinstance(raw["text"], str):
        raise CorpusError(f"{where}: text must be a string")
    views = raw.get("views", 0)
    if not isinstance(views, int) or isinstance(views, bool) or views < 0:
        raise CorpusError(f"{where}: views must be a non-negative integer")
    aliases = raw.get("aliases", [])
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise CorpusError(f"{where}: aliases must be a list of strings")
    en_link = raw.get("en_id")
    if en_link is not None and not isinstance(en_link, str):
        raise CorpusError(f"{where}: en_id must be a string")
    instance_of = raw.get("instance_of", [])
    if not isinstance(instance_of, list) or not all(isinstance(c, str) for c in instance_of):
        raise CorpusError(f"{where}: instance_of must be a list of strings")
    return Document(
        doc_id=doc_id,
        title=raw["title"],
        body=raw["text"],
        language=language,
        aliases=tuple(aliases),
        page_views=views,
        en_link=en_link,
        instance_of=tuple(instance_of),
    )


def ingest_corpus(path: Path | str, language: str) -> Corpus:
    """Parse a JSONL corpus file into a :class:`Corpus`.

    Args:
        path: JSON Lines file, one article object per line.
        language: language code the articles are written in.

    Raises:
        CorpusError: on unreadable JSON, missing or mistyped fields, or a
            duplicate document id.  Parse diagnostics name the line number.
    """
    path = Path(path)
    documents: list[Document] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name} line {line_no}"
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON ({exc.msg})") from exc
            if not isinstance(raw, dict):
                raise CorpusError(f"{where}: expected a JSON object")
            documents.append(_parse_record(raw, language, where))
    corpus = Corpus(language, documents)
    logger.info("ingested %d documents for language %s", len(corpus), language)
    return corpus


def partition_corpus(corpus: Corpus, english_corpus: Corpus) -> dict[str, Partition]:
    """Assign every document in ``corpus`` to monolingual or bilingual.

    A document is bilingual when its ``en_link`` resolves to a document in
    ``english_corpus``.  Dangling links are demoted to monolingual with a
    warning rather than failing the run.
    """
    if corpus.language == "en":
        raise CorpusError("partitioning applies to non-English corpora only")
    if english_corpus.language != "en":
        raise CorpusError(
            f"expected an English reference corpus, got language {english_corpus.language!r}"
        )
    partitions: dict[str, Partition] = {}
    demoted = 0
    for doc in corpus:
        if doc.en_link is None:
            partitions[doc.doc_id] = Partition.MONOLINGUAL
        elif doc.en_link in english_corpus:
            partitions[doc.doc_id] = Partition.BILINGUAL
        else:
            demoted += 1
            logger.warning(
                "document %s links to missing English page %s; treating as monolingual",
                doc.doc_id,
                doc.en_link,
            )
            partitions[doc.doc_id] = Partition.MONOLINGUAL
    if demoted:
        logger.warning("%d dangling English links demoted to monolingual", demoted)
    return partitions


def _snap_ceil(value: float) -> int:
    # Guards against binary float drift: 0.2 * 35 must give 7, not 8.
    nearest = round(value)
    if abs(value - nearest) < 1e-9:
        return int(nearest)
    return math.ceil(value)


def filter_by_popularity(
    pool: Iterable[Document], top_fraction: float = DEFAULT_TOP_FRACTION
) -> list[Document]:
    """Keep the most viewed ``ceil(top_fraction * n)`` documents of ``pool``.

    Ties on ``page_views`` break by ascending ``doc_id`` so the survivor
    set is deterministic.  Returned in descending popularity order.
    """
    if not 0.0 < top_fraction <= 1.0:
        raise CorpusError(f"top_fraction must be in (0, 1], got {top_fraction}")
    docs = sorted(pool, key=lambda d: (-d.page_views, d.doc_id))
    if not docs:
        raise CorpusError("popularity filter received an empty pool")
    keep = _snap_ceil(top_fraction * len(docs))
    return docs[:keep]


def filter_by_length(pool: Iterable[Document], min_chars: int = DEFAULT_MIN_CHARS) -> list[Document]:
    """Drop documents whose body is shorter than ``min_chars`` characters."""
    if min_chars < 0:
        raise CorpusError(f"min_chars must be non-negative, got {min_chars}")
    return [doc for doc in pool if doc.length_chars >= min_chars]


def load_domain_mapping(path: Path | str) -> dict[str, DomainLabel]:
    """Read a two-column TSV mapping metadata class ids to domain labels."""
    mapping: dict[str, DomainLabel] = {}
    labels = {label.value: label for label in DomainLabel}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"domain mapping line {line_no}: expected two tab-separated columns")
            class_id, label = parts
            if label not in labels:
                raise CorpusError(
                    f"domain mapping line {line_no}: unknown domain label {label!r}"
                )
            mapping[class_id] = labels[label]
    return mapping


def default_domain_mapping() -> dict[str, DomainLabel]:
    """The mapping shipped with the package (humans and film classes)."""
    with resources.as_file(resources.files("totsim").joinpath("assets/domain_mapping.tsv")) as path:
        return load_domain_mapping(path)


def assign_domain(doc: Document, mapping: Mapping[str, DomainLabel]) -> DomainLabel:
    """Label a document by its first mapped ``instance_of`` entry.

    Entries are checked in stored order; documents with no mapped entry
    fall back to the general domain.
    """
    for class_id in doc.instance_of:
        if class_id in mapping:
            return mapping[class_id]
    return DomainLabel.GENERAL
