"""Embedding providers.

Two provider slots exist in the system: one for masked-question retrieval
and one for biomedical entity mentions. Both are served through the same
interface; tests use the deterministic hash-projection stub so nothing
here requires network access.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "EmbeddingProvider",
    "EmbeddingError",
    "HashEmbedder",
    "HttpEmbedder",
    "load_embedding_file",
    "write_embedding_file",
]

DEFAULT_RETRIEVAL_MODEL = "bge-large-en-v1.5"
DEFAULT_ENTITY_MODEL = "SapBERT-from-PubMedBERT-fulltext"


class EmbeddingError(RuntimeError):
    pass


class EmbeddingProvider(Protocol):
    name: str

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an (n, dim) float array, one row per input text."""
        ...


def _canonical(text: str) -> str:
    return " ".join(text.lower().split())


class HashEmbedder:
    """Deterministic stand-in: seeds a generator from the text's hash.

    Equal texts (after lowercasing and whitespace collapse) map to equal
    vectors, so a mention identical to a concept name scores cosine 1.0.
    """

    def __init__(self, dim: int = 128, name: str = "hash-stub"):
        self.dim = dim
        self.name = name

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(_canonical(text).encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "big")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            out[i] = vec / np.linalg.norm(vec)
        return out


class HttpEmbedder:
    """Thin adapter for an HTTP embedding endpoint.

    Speaks the common ``{"model": ..., "input": [...]}`` request shape with
    an OpenAI-style ``{"data": [{"embedding": [...]}]}`` response. The
    model name is configuration; the default is the retrieval model.
    """

    def __init__(
        self,
        url: str,
        model: str = DEFAULT_RETRIEVAL_MODEL,
        api_key_env: str = "EPIQUERY_EMBEDDING_API_KEY",
        timeout: float = 30.0,
    ):
        self.url = url
        self.model = model
        self.name = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        import httpx

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = httpx.post(
                self.url,
                json={"model": self.model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            payload = response.json()
            rows = [item["embedding"] for item in payload["data"]]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as err:
            raise EmbeddingError(f"embedding endpoint failure: {err}") from err
        if len(rows) != len(texts):
            raise EmbeddingError(
                f"embedding endpoint returned {len(rows)} rows for {len(texts)} inputs"
            )
        return np.asarray(rows, dtype=np.float64)


def load_embedding_file(path: str | Path, key: str = "id") -> dict:
    """Read a JSONL file of ``{<key>, vector[]}`` rows into a dict."""
    vectors: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                vectors[record[key]] = np.asarray(record["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise EmbeddingError(f"{path}:{lineno}: bad embedding row: {err}") from err
    return vectors


def write_embedding_file(path: str | Path, vectors: dict, key: str = "id") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ident, vec in vectors.items():
            row = {key: ident, "vector": [round(float(x), 8) for x in np.asarray(vec)]}
            fh.write(json.dumps(row) + "\n")
