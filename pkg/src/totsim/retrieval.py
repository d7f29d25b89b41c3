"""Lexical retrieval over a shared inverted index, plus run file IO.

Two scoring functions run against the same index so that hyperparameter
sweeps measure ranking behavior, not indexing differences:

* BM25 with ``idf = ln((N - df + 0.5) / (df + 0.5) + 1)`` and the usual
  ``tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))`` saturation.
* Query likelihood with Dirichlet smoothing,
  ``sum_t log((tf + mu * ctf / CL) / (dl + mu))`` over query tokens with
  non-zero collection frequency.

Tokenization is either lowercase word splitting for alphabetic scripts
or character bigrams over CJK runs (with word splitting applied to any
embedded non-CJK stretches), matching how mixed-script articles are
usually indexed without language-specific segmenters.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import RunFileError, TotsimError
from .util import atomic_write_text, dump_json, read_json

logger = logging.getLogger(__name__)

__all__ = [
    "Tokenizer",
    "tokenizer_for_language",
    "InvertedIndex",
    "build_index",
    "save_index",
    "load_index",
    "score_bm25",
    "score_ql_dirichlet",
    "RetrievalSystem",
    "default_lexical_pool",
    "RunResult",
    "run_search",
    "write_run_file",
    "load_external_run",
    "DEFAULT_DEPTH",
    "INDEX_FORMAT",
    "INDEX_VERSION",
]

DEFAULT_DEPTH = 1000
INDEX_FORMAT = "totsim-index"
INDEX_VERSION = 1

MODE_WHITESPACE = "whitespace"
MODE_CJK_NGRAM = "cjk-ngram"

# Unicode blocks treated as CJK for n-gram segmentation: Han (unified,
# extension A, compatibility), kana, and hangul (syllables plus jamo).
_CJK_RANGES = (
    (0x1100, 0x11FF),
    (0x3040, 0x309F),
    (0x30A0, 0x30FF),
    (0x3130, 0x318F),
    (0x31F0, 0x31FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7A3),
    (0xF900, 0xFAFF),
)

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

CJK_LANGUAGES = {"zh", "ja", "ko"}


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


@dataclass(frozen=True)
class Tokenizer:
    """Deterministic text to token mapping shared by indexing and querying."""

    mode: str = MODE_WHITESPACE
    ngram: int = 2

    def __post_init__(self) -> None:
        if self.mode not in (MODE_WHITESPACE, MODE_CJK_NGRAM):
            raise TotsimError(f"unknown tokenizer mode {self.mode!r}")
        if self.ngram < 1:
            raise TotsimError(f"ngram must be at least 1, got {self.ngram}")

    def tokenize(self, text: str) -> list[str]:
        if self.mode == MODE_WHITESPACE:
            return _WORD_RE.findall(text.lower())
        tokens: list[str] = []
        run: list[str] = []
        other: list[str] = []
        def flush_run() -> None:
            if not run:
                return
            joined = "".join(run)
            if len(joined) < self.ngram:
                tokens.append(joined)
            else:
                tokens.extend(
                    joined[i : i + self.ngram] for i in range(len(joined) - self.ngram + 1)
                )
            run.clear()
        def flush_other() -> None:
            if other:
                tokens.extend(_WORD_RE.findall("".join(other).lower()))
                other.clear()
        for ch in text:
            if _is_cjk(ch):
                flush_other()
                run.append(ch)
            else:
                flush_run()
                other.append(ch)
        flush_run()
        flush_other()
        return tokens

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ngram": self.ngram}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Tokenizer":
        return cls(mode=raw["mode"], ngram=raw["ngram"])


def tokenizer_for_language(language: str) -> Tokenizer:
    """Character bigrams for CJK language codes, word splitting otherwise."""
    if language in CJK_LANGUAGES:
        return Tokenizer(mode=MODE_CJK_NGRAM, ngram=2)
    return Tokenizer(mode=MODE_WHITESPACE)


@dataclass
class InvertedIndex:
    """Term postings plus the document statistics both scorers need."""

    language: str
    tokenizer: Tokenizer
    doc_lengths: dict[str, int]
    postings: dict[str, dict[str, int]]
    collection_length: int

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def avg_doc_length(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return self.collection_length / len(self.doc_lengths)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def ctf(self, term: str) -> int:
        return sum(self.postings.get(term, {}).values())


def build_index(corpus, tokenizer: Tokenizer) -> InvertedIndex:
    """Index every document body in ``corpus`` with ``tokenizer``.

    Only bodies are indexed; titles and aliases stay out so retrieval
    difficulty reflects the article text alone.
    """
    doc_lengths: dict[str, int] = {}
    postings: dict[str, dict[str, int]] = {}
    collection_length = 0
    for doc in corpus:
        tokens = tokenizer.tokenize(doc.body)
        doc_lengths[doc.doc_id] = len(tokens)
        collection_length += len(tokens)
        for token in tokens:
            entry = postings.setdefault(token, {})
            entry[doc.doc_id] = entry.get(doc.doc_id, 0) + 1
    logger.info(
        "indexed %d documents, %d terms, %d total tokens",
        len(doc_lengths),
        len(postings),
        collection_length,
    )
    return InvertedIndex(
        language=corpus.language,
        tokenizer=tokenizer,
        doc_lengths=doc_lengths,
        postings=postings,
        collection_length=collection_length,
    )


def save_index(index: InvertedIndex, path: Path | str) -> None:
    """Write the index as canonical JSON; reload and re-save is byte-identical."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "language": index.language,
        "tokenizer": index.tokenizer.to_dict(),
        "doc_lengths": index.doc_lengths,
        "postings": index.postings,
        "collection_length": index.collection_length,
    }
    atomic_write_text(path, dump_json(payload) + "\n")


def load_index(path: Path | str) -> InvertedIndex:
    payload = read_json(path)
    if not isinstance(payload, dict) or payload.get("format") != INDEX_FORMAT:
        raise TotsimError(f"{path}: not a {INDEX_FORMAT} file")
    if payload.get("version") != INDEX_VERSION:
        raise TotsimError(
            f"{path}: unsupported index version {payload.get('version')!r}"
        )
    return InvertedIndex(
        language=payload["language"],
        tokenizer=Tokenizer.from_dict(payload["tokenizer"]),
        doc_lengths=payload["doc_lengths"],
        postings=payload["postings"],
        collection_length=payload["collection_length"],
    )


def _rank(scores: dict[str, float], depth: int) -> list[tuple[str, float]]:
    # Ties break by ascending doc_id so rankings are reproducible.
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ordered[:depth]


def score_bm25(
    query: str,
    index: InvertedIndex,
    k1: float = 0.9,
    b: float = 0.4,
    depth: int = DEFAULT_DEPTH,
) -> list[tuple[str, float]]:
    """Rank documents containing at least one query token by BM25.

    Scores accumulate per document in query token order (repeated tokens
    contribute once per occurrence), and ties sort by ascending doc id.
    """
    tokens = index.tokenizer.tokenize(query)
    matched = [t for t in tokens if t in index.postings]
    if not matched:
        return []
    candidates = sorted({doc_id for t in set(matched) for doc_id in index.postings[t]})
    n_docs = index.doc_count
    avgdl = index.avg_doc_length
    idf = {
        t: math.log((n_docs - index.df(t) + 0.5) / (index.df(t) + 0.5) + 1.0)
        for t in set(matched)
    }
    scores: dict[str, float] = {}
    for doc_id in candidates:
        dl = index.doc_lengths[doc_id]
        norm = k1 * (1.0 - b + b * dl / avgdl)
        score = 0.0
        for token in matched:
            tf = index.postings[token].get(doc_id)
            if tf is None:
                continue
            score += idf[token] * tf * (k1 + 1.0) / (tf + norm)
        scores[doc_id] = score
    return _rank(scores, depth)


def score_ql_dirichlet(
    query: str,
    index: InvertedIndex,
    mu: float = 1000.0,
    depth: int = DEFAULT_DEPTH,
) -> list[tuple[str, float]]:
    """Rank by Dirichlet-smoothed query log likelihood.

    Tokens absent from the whole collection are dropped; candidate
    documents are those containing at least one remaining token.
    """
    tokens = index.tokenizer.tokenize(query)
    matched = [t for t in tokens if t in index.postings]
    if not matched:
        return []
    candidates = sorted({doc_id for t in set(matched) for doc_id in index.postings[t]})
    collection_length = index.collection_length
    ctf = {t: index.ctf(t) for t in set(matched)}
    scores: dict[str, float] = {}
    for doc_id in candidates:
        dl = index.doc_lengths[doc_id]
        score = 0.0
        for token in matched:
            tf = index.postings[token].get(doc_id, 0)
            prior = mu * ctf[token] / collection_length
            score += math.log((tf + prior) / (dl + mu))
        scores[doc_id] = score
    return _rank(scores, depth)


@dataclass(frozen=True)
class RetrievalSystem:
    """One member of the system pool: a scorer configuration or an external run."""

    system_id: str
    kind: str
    k1: float | None = None
    b: float | None = None
    mu: float | None = None
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "bm25":
            if self.k1 is None or self.b is None:
                raise TotsimError(f"system {self.system_id}: bm25 needs k1 and b")
        elif self.kind == "ql-dirichlet":
            if self.mu is None:
                raise TotsimError(f"system {self.system_id}: ql-dirichlet needs mu")
        elif self.kind == "external":
            if self.path is None:
                raise TotsimError(f"system {self.system_id}: external needs a run path")
        else:
            raise TotsimError(f"system {self.system_id}: unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        raw: dict = {"system_id": self.system_id, "kind": self.kind}
        for key in ("k1", "b", "mu", "path"):
            value = getattr(self, key)
            if value is not None:
                raw[key] = value
        return raw

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RetrievalSystem":
        return cls(
            system_id=raw["system_id"],
            kind=raw["kind"],
            k1=raw.get("k1"),
            b=raw.get("b"),
            mu=raw.get("mu"),
            path=raw.get("path"),
        )


def default_lexical_pool() -> list[RetrievalSystem]:
    """The seven-system hyperparameter grid every evaluation shares."""
    systems = []
    for k1, b in ((0.9, 0.4), (1.2, 0.75), (2.0, 0.75), (1.2, 0.4)):
        systems.append(
            RetrievalSystem(system_id=f"bm25-k{k1}-b{b}", kind="bm25", k1=k1, b=b)
        )
    for mu in (500, 1000, 2000):
        systems.append(
            RetrievalSystem(system_id=f"qld-mu{mu}", kind="ql-dirichlet", mu=float(mu))
        )
    return systems


@dataclass
class RunResult:
    """Per-query rankings produced by one system."""

    system_id: str
    rankings: dict[str, list[tuple[str, float]]]

    def query_ids(self) -> list[str]:
        return sorted(self.rankings)


def run_search(
    system: RetrievalSystem,
    queries: Mapping[str, str],
    index: InvertedIndex,
    depth: int = DEFAULT_DEPTH,
) -> RunResult:
    """Score every query with ``system`` against ``index``."""
    rankings: dict[str, list[tuple[str, float]]] = {}
    for query_id in sorted(queries):
        text = queries[query_id]
        if system.kind == "bm25":
            ranking = score_bm25(text, index, k1=system.k1, b=system.b, depth=depth)
        elif system.kind == "ql-dirichlet":
            ranking = score_ql_dirichlet(text, index, mu=system.mu, depth=depth)
        else:
            raise TotsimError(f"system {system.system_id}: cannot execute kind {system.kind!r}")
        rankings[query_id] = ranking
    return RunResult(system_id=system.system_id, rankings=rankings)


def write_run_file(run: RunResult, path: Path | str) -> None:
    """Write the six-column run format: query_id Q0 doc_id rank score system_id."""
    lines = []
    for query_id in sorted(run.rankings):
        for rank, (doc_id, score) in enumerate(run.rankings[query_id], start=1):
            lines.append(f"{query_id} Q0 {doc_id} {rank} {score!r} {run.system_id}\n")
    atomic_write_text(path, "".join(lines))


def load_external_run(
    path: Path | str,
    expected_queries: Iterable[str],
    depth: int = DEFAULT_DEPTH,
    system_id: str | None = None,
) -> RunResult:
    """Parse and validate a six-column run file.

    Args:
        path: run file location.
        expected_queries: query ids the evaluation will ask about.  The
            returned result covers exactly these ids: queries absent
            from the file yield empty rankings and a single warning
            naming the count, while file queries outside the set are
            dropped (external systems often cover only the real query
            set and score zero elsewhere).
        depth: rankings are truncated to this many entries.
        system_id: overrides the file's system tag when given; the tag
            itself must still be uniform across the file.

    Raises:
        RunFileError: malformed lines, duplicate documents within a
            query, non-increasing ranks, or scores increasing with rank.
            Diagnostics name the offending line number.
    """
    path = Path(path)
    expected = set(expected_queries)
    per_query: dict[str, list[tuple[int, float, str, int]]] = {}
    seen_docs: dict[str, set[str]] = {}
    file_tag: str | None = None
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise RunFileError(f"{path.name} line {line_no}: expected 6 columns, got {len(parts)}")
            query_id, _q0, doc_id, rank_str, score_str, tag = parts
            try:
                rank = int(rank_str)
                score = float(score_str)
            except ValueError:
                raise RunFileError(
                    f"{path.name} line {line_no}: rank must be an integer and score a number"
                ) from None
            if file_tag is None:
                file_tag = tag
            elif tag != file_tag:
                raise RunFileError(
                    f"{path.name} line {line_no}: mixed system tags {file_tag!r} and {tag!r}"
                )
            docs = seen_docs.setdefault(query_id, set())
            if doc_id in docs:
                raise RunFileError(
                    f"{path.name} line {line_no}: duplicate document {doc_id} for query {query_id}"
                )
            docs.add(doc_id)
            per_query.setdefault(query_id, []).append((rank, score, doc_id, line_no))
    rankings: dict[str, list[tuple[str, float]]] = {}
    for query_id, entries in per_query.items():
        entries.sort(key=lambda e: e[0])
        previous_rank: int | None = None
        previous_score: float | None = None
        for rank, score, doc_id, line_no in entries:
            if previous_rank is not None and rank <= previous_rank:
                raise RunFileError(
                    f"{path.name} line {line_no}: rank {rank} does not increase for query {query_id}"
                )
            if previous_score is not None and score > previous_score:
                raise RunFileError(
                    f"{path.name} line {line_no}: score increases with rank for query {query_id}"
                )
            previous_rank = rank
            previous_score = score
        rankings[query_id] = [(doc_id, score) for _, score, doc_id, _ in entries[:depth]]
    extra = set(rankings) - expected
    if extra:
        logger.info(
            "%s: dropping %d queries outside the expected set", path.name, len(extra)
        )
        for query_id in extra:
            del rankings[query_id]
    missing = expected - set(rankings)
    if missing:
        logger.warning(
            "%s: %d expected queries missing from run; they will score zero", path.name, len(missing)
        )
        for query_id in missing:
            rankings[query_id] = []
    return RunResult(system_id=system_id or file_tag or path.stem, rankings=rankings)
