"""Text generation and translation backends.

Generation and translation are pluggable so the pipeline can run against
a hosted chat model in production and against deterministic stand-ins in
tests and desk-scale runs.  A backend is anything with a ``name`` and a
``complete(prompt, temperature)`` returning text; translators expose
``translate(text, target_language)``.

Credentials are never read from configuration files.  The HTTP backend
takes its endpoint and key from the environment (``TOTSIM_ENDPOINT`` and
``TOTSIM_API_KEY``) unless passed explicitly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import requests

from .errors import ConfigError, ProviderError
from .util import read_json, write_json

logger = logging.getLogger(__name__)

__all__ = [
    "ChatProvider",
    "Translator",
    "HttpChatProvider",
    "CannedResponseProvider",
    "DeterministicMockProvider",
    "ScriptedProvider",
    "IdentityTranslator",
    "MappingTranslator",
    "ChatTranslator",
    "request_hash",
    "ENDPOINT_ENV",
    "API_KEY_ENV",
]

ENDPOINT_ENV = "TOTSIM_ENDPOINT"
API_KEY_ENV = "TOTSIM_API_KEY"


@runtime_checkable
class ChatProvider(Protocol):
    name: str

    def complete(self, prompt: str, temperature: float) -> str: ...


@runtime_checkable
class Translator(Protocol):
    name: str

    def translate(self, text: str, target_language: str) -> str: ...


def request_hash(prompt: str, temperature: float) -> str:
    """Stable key for one completion request, used by the canned backend."""
    canonical = json.dumps(
        {"prompt": prompt, "temperature": temperature}, sort_keys=True, ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpChatProvider:
    """Chat-completion backend over a JSON HTTP API.

    Sends ``{"model", "messages", "temperature"}`` and expects the reply
    text at ``choices[0].message.content``.  Transient failures (network
    errors and 5xx) retry with exponential backoff; client errors fail
    immediately.
    """

    def __init__(
        self,
        model: str,
        endpoint: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
    ):
        self.name = model
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ConfigError(f"no endpoint given and {ENDPOINT_ENV} is unset")
        self.api_key = api_key or os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def complete(self, prompt: str, temperature: float) -> str:
        payload = {
            "model": self.name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code >= 500:
                    last_error = ProviderError(
                        f"{self.name}: server error {response.status_code}"
                    )
                elif response.status_code >= 400:
                    raise ProviderError(
                        f"{self.name}: request rejected ({response.status_code})"
                    )
                else:
                    return self._extract(response)
            if attempt + 1 < self.max_retries:
                delay = self.backoff * (2**attempt)
                logger.warning(
                    "%s: attempt %d failed (%s); retrying in %.1fs",
                    self.name,
                    attempt + 1,
                    last_error,
                    delay,
                )
                time.sleep(delay)
        raise ProviderError(f"{self.name}: gave up after {self.max_retries} attempts: {last_error}")

    def _extract(self, response: requests.Response) -> str:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"{self.name}: malformed response body") from exc
        if not isinstance(text, str):
            raise ProviderError(f"{self.name}: response content is not text")
        return text


class CannedResponseProvider:
    """Replays recorded responses keyed by request hash.

    The backing file is JSON mapping :func:`request_hash` digests to
    response text, so recorded sessions replay offline and byte-for-byte.
    """

    def __init__(self, path: Path | str, name: str = "canned"):
        self.name = name
        self.path = Path(path)
        raw = read_json(self.path)
        if not isinstance(raw, dict):
            raise ProviderError(f"{self.path}: expected a JSON object of hash to response")
        self._responses: dict[str, str] = dict(raw)

    def complete(self, prompt: str, temperature: float) -> str:
        key = request_hash(prompt, temperature)
        try:
            return self._responses[key]
        except KeyError:
            raise ProviderError(
                f"{self.name}: no canned response for request {key[:12]}..."
            ) from None

    @staticmethod
    def record(path: Path | str, requests_and_responses: Mapping[tuple[str, float], str]) -> None:
        """Write a canned-response file from (prompt, temperature) pairs."""
        write_json(
            path,
            {
                request_hash(prompt, temperature): response
                for (prompt, temperature), response in requests_and_responses.items()
            },
        )


class DeterministicMockProvider:
    """Pure function of the request, for tests and desk-scale pipelines.

    The response is a fixed number of short slices sampled from the
    prompt itself (so summaries and queries share vocabulary with the
    source article and retrieval stays meaningful) plus a hash token for
    uniqueness.  Slices are long enough to carry whole words through a
    summarize-then-generate chain.  There is no state, so concurrent use
    is safe and every run is reproducible.
    """

    def __init__(self, name: str = "mock-chat", slice_length: int = 24, slices: int = 6):
        self.name = name
        self.slice_length = slice_length
        self.slices = slices

    def complete(self, prompt: str, temperature: float) -> str:
        digest = hashlib.sha256(
            f"{self.name}|{temperature!r}|{prompt}".encode("utf-8")
        ).digest()
        rng = random.Random(digest)
        pieces: list[str] = []
        span = max(len(prompt) - self.slice_length, 1)
        for _ in range(self.slices):
            start = rng.randrange(span)
            piece = prompt[start : start + self.slice_length]
            pieces.append(" ".join(piece.split()))
        token = digest.hex()[:10]
        first = " ".join(pieces[: self.slices // 2])
        second = " ".join(pieces[self.slices // 2 :])
        return f"{first}\n\n{second} {token}"


class ScriptedProvider:
    """Returns a fixed response sequence; the last entry repeats when exhausted.

    For exercising retry paths in tests.  Not thread safe.
    """

    def __init__(self, responses: Sequence[str], name: str = "scripted"):
        if not responses:
            raise ProviderError("scripted provider needs at least one response")
        self.name = name
        self._responses = list(responses)
        self.calls = 0

    def complete(self, prompt: str, temperature: float) -> str:
        index = min(self.calls, len(self._responses) - 1)
        self.calls += 1
        return self._responses[index]


class IdentityTranslator:
    """Returns the input unchanged; stands in when no translation is wanted."""

    name = "identity-mt"

    def translate(self, text: str, target_language: str) -> str:
        return text


class MappingTranslator:
    """Dictionary lookup translator for tests; unknown text passes through."""

    def __init__(self, mapping: Mapping[str, str], name: str = "mapping-mt"):
        self.name = name
        self._mapping = dict(mapping)

    def translate(self, text: str, target_language: str) -> str:
        return self._mapping.get(text, text)


class ChatTranslator:
    """Translation via a chat backend with a fixed instruction prompt."""

    def __init__(self, provider: ChatProvider):
        self.provider = provider
        self.name = f"translate-{provider.name}"

    def translate(self, text: str, target_language: str) -> str:
        prompt = (
            f"Translate the following text into the language with code "
            f"{target_language!r}. Output only the translation.\n\n{text}"
        )
        return self.provider.complete(prompt, temperature=0.0)
