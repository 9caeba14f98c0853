"""Entity-masked embedding retrieval of similar question-SQL exemplars.

Questions are masked before embedding so retrieval matches question
structure rather than the specific drugs or conditions mentioned. The
index is a brute-force scan: the corpus is small enough that exactness
is cheap, and every ranking stays testable against a full-scan oracle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import QuestionSqlPair
from .embeddings import EmbeddingProvider, load_embedding_file
from .grammar import DomainTag

__all__ = [
    "RetrievalError",
    "RetrievalIndex",
    "RetrievalHit",
    "mask_question",
    "build_index",
    "top_k",
    "cosine_similarity",
]

# Spans already masked must never be re-matched by a shorter mention
# (e.g. "on" inside <CONDITION>), which also makes masking idempotent.
_LABEL_RE = re.compile("|".join(re.escape(t.mask_label) for t in DomainTag))


class RetrievalError(RuntimeError):
    pass


def mask_question(question: str, entities: Sequence) -> str:
    """Replace each entity mention with its generic domain label.

    Matching is case-insensitive and longest-mention-first; overlapping or
    nested matches are masked once. Mentions absent from the text are
    ignored.
    """
    taken: list[tuple[int, int]] = [m.span() for m in _LABEL_RE.finditer(question)]

    def overlaps(start: int, end: int) -> bool:
        return any(start < e and end > s for s, e in taken)

    replacements: list[tuple[int, int, str]] = []
    for entity in sorted(entities, key=lambda e: len(e.mention), reverse=True):
        if not entity.mention:
            continue
        domain = entity.domain if isinstance(entity.domain, DomainTag) else DomainTag.parse(str(entity.domain))
        for m in re.finditer(re.escape(entity.mention), question, re.IGNORECASE):
            if not overlaps(m.start(), m.end()):
                taken.append((m.start(), m.end()))
                replacements.append((m.start(), m.end(), domain.mask_label))

    masked = question
    for start, end, label in sorted(replacements, reverse=True):
        masked = masked[:start] + label + masked[end:]
    return masked


@dataclass(frozen=True)
class RetrievalHit:
    pair_id: str
    score: float


@dataclass(frozen=True)
class RetrievalIndex:
    """Immutable masked-question index; vectors are L2-normalized rows."""

    pair_ids: tuple[str, ...]
    groups: tuple[str, ...]
    masked_questions: tuple[str, ...]
    vectors: np.ndarray
    provider_name: str

    def __len__(self) -> int:
        return len(self.pair_ids)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if matrix.size and not np.all(np.isfinite(matrix)):
        raise RetrievalError("non-finite embedding vector")
    if np.any(norms == 0):
        raise RetrievalError("zero-norm embedding vector")
    return matrix / norms


def build_index(
    pairs: Sequence[QuestionSqlPair],
    embed: EmbeddingProvider,
    precomputed: str | Path | None = None,
) -> RetrievalIndex:
    """Index every pair by its masked question.

    When ``precomputed`` names a JSONL file of ``{id, vector[]}`` rows,
    vectors found there are used instead of provider calls.
    """
    masked = [mask_question(p.question, p.entities) for p in pairs]
    if not pairs:
        vectors = np.zeros((0, 0))
    elif precomputed is not None:
        stored = load_embedding_file(precomputed)
        missing = [p.id for p in pairs if p.id not in stored]
        fresh = embed.embed([m for p, m in zip(pairs, masked) if p.id in set(missing)]) if missing else None
        rows, cursor = [], 0
        for pair, text in zip(pairs, masked):
            if pair.id in stored:
                rows.append(np.asarray(stored[pair.id], dtype=np.float64))
            else:
                rows.append(fresh[cursor])
                cursor += 1
        vectors = np.vstack(rows)
    else:
        try:
            vectors = embed.embed(masked)
        except Exception as err:
            raise RetrievalError(f"embedding provider failed during build: {err}") from err
    if len(pairs) and vectors.shape[0] != len(pairs):
        raise RetrievalError("provider returned wrong number of vectors")
    return RetrievalIndex(
        pair_ids=tuple(p.id for p in pairs),
        groups=tuple(p.paraphrase_group for p in pairs),
        masked_questions=tuple(masked),
        vectors=_normalize_rows(vectors) if len(pairs) else vectors,
        provider_name=getattr(embed, "name", "unknown"),
    )


def top_k(
    index: RetrievalIndex,
    masked_query: str,
    k: int,
    embed: EmbeddingProvider,
    exclude_groups: frozenset[str] | set[str] = frozenset(),
) -> list[RetrievalHit]:
    """The k highest-cosine entries outside the excluded paraphrase groups.

    Hits are ordered by descending score with ties broken by ascending
    pair id; fewer than k are returned only when the filtered index is
    smaller than k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    keep = [i for i, g in enumerate(index.groups) if g not in exclude_groups]
    if not keep:
        raise RetrievalError("index is empty after paraphrase-group exclusion")
    query = embed.embed([masked_query])[0]
    norm = np.linalg.norm(query)
    if norm == 0:
        raise RetrievalError("zero-norm query embedding")
    scores = index.vectors[keep] @ (query / norm)
    order = sorted(range(len(keep)), key=lambda j: (-scores[j], index.pair_ids[keep[j]]))
    return [
        RetrievalHit(pair_id=index.pair_ids[keep[j]], score=float(scores[j]))
        for j in order[:k]
    ]


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """dot(u, v) / (|u| |v|); dims must match and norms be non-zero."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm vector")
    return float(a @ b / (na * nb))
