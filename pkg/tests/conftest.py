"""Shared factories and fixture paths."""

from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from totsim.corpus import Corpus, Document

DATA_DIR = Path(__file__).parent / "data"
TOY_DIR = DATA_DIR / "toy"


def make_doc(
    doc_id: str = "d1",
    title: str = "Title",
    body: str = "body text",
    language: str = "en",
    aliases: tuple[str, ...] = (),
    page_views: int = 0,
    en_link: str | None = None,
    instance_of: tuple[str, ...] = (),
) -> Document:
    return Document(
        doc_id=doc_id,
        title=title,
        body=body,
        language=language,
        aliases=aliases,
        page_views=page_views,
        en_link=en_link,
        instance_of=instance_of,
    )


def make_corpus(language: str = "en", *docs: Document) -> Corpus:
    return Corpus(language, docs)


@pytest.fixture
def toy_dir() -> Path:
    return TOY_DIR


@pytest.fixture
def toy_copy(tmp_path: Path) -> Path:
    """A disposable copy of the toy pipeline directory.

    The config uses relative paths, so a copy keeps CLI tests from
    writing into the repository fixture.
    """
    target = tmp_path / "toy"
    shutil.copytree(TOY_DIR, target)
    return target
