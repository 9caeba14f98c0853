"""Medical coding: resolve placeholders to ontology concept ids.

Resolution is a two-stage funnel. Candidate retrieval embeds the mention
with the biomedical entity model and ranks concepts in the placeholder's
domain partition by cosine similarity; verification shows the top
candidates to an LLM and keeps the ones it accepts. When verification
yields nothing usable the rank-1 candidate is kept instead, and that
fallback is flagged in the audit trail rather than hidden.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingProvider
from .gateway import LlmGateway, ModelConfig
from .grammar import DomainTag, EntityPlaceholder, SqlTemplate
from .prompting import build_verification_prompt

__all__ = [
    "OntologyConcept",
    "OntologyStore",
    "RankedCandidate",
    "ConceptSet",
    "CodingError",
    "load_ontology",
    "bundled_ontology_paths",
    "candidate_concepts",
    "verify_candidates",
    "resolve_placeholders",
    "expand_with_descendants",
    "DEFAULT_CANDIDATE_COUNT",
]

DEFAULT_CANDIDATE_COUNT = 50


class CodingError(Exception):
    pass


@dataclass(frozen=True)
class OntologyConcept:
    """One row of the concept vocabulary with its precomputed embedding."""

    concept_id: int
    concept_name: str
    vocabulary_id: str
    domain: DomainTag
    standard: bool
    embedding: np.ndarray

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OntologyConcept) and other.concept_id == self.concept_id

    def __hash__(self) -> int:
        return hash(self.concept_id)


class OntologyStore:
    """Immutable in-memory vocabulary, partitioned by domain.

    Partition vectors are stacked into one matrix per domain so candidate
    scoring is a single matrix-vector product.
    """

    def __init__(self, concepts: Sequence[OntologyConcept]):
        if not concepts:
            raise CodingError("ontology store requires at least one concept")
        dims = {c.embedding.shape[0] for c in concepts}
        if len(dims) != 1:
            raise CodingError(f"mixed embedding dimensions in store: {sorted(dims)}")
        self.dim = dims.pop()
        self.by_id: dict[int, OntologyConcept] = {}
        for concept in concepts:
            if concept.concept_id in self.by_id:
                raise CodingError(f"duplicate concept_id {concept.concept_id}")
            self.by_id[concept.concept_id] = concept
        self._partitions: dict[DomainTag, list[OntologyConcept]] = {}
        for concept in concepts:
            self._partitions.setdefault(concept.domain, []).append(concept)
        self._matrices: dict[DomainTag, np.ndarray] = {}
        for domain, members in self._partitions.items():
            members.sort(key=lambda c: c.concept_id)
            self._matrices[domain] = np.stack([c.embedding for c in members])

    def __len__(self) -> int:
        return len(self.by_id)

    def partition(self, domain: DomainTag) -> tuple[OntologyConcept, ...]:
        return tuple(self._partitions.get(domain, ()))

    def partition_matrix(self, domain: DomainTag) -> np.ndarray | None:
        return self._matrices.get(domain)

    def domains(self) -> tuple[DomainTag, ...]:
        return tuple(sorted(self._partitions, key=lambda d: d.value))


def _normalize(vector: Sequence[float], concept_id: int) -> np.ndarray:
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or arr.ndim != 1:
        raise CodingError(f"concept {concept_id}: degenerate embedding")
    return arr / norm


def load_ontology(concept_file: str | Path, embedding_file: str | Path) -> OntologyStore:
    """Load concepts (TSV) and their embeddings (JSONL) into a store.

    The TSV header uses OMOP concept-table column names: concept_id,
    concept_name, vocabulary_id, domain_id, standard_concept. Every concept
    must have an embedding row; the reverse is not required.
    """
    vectors: dict[int, list[float]] = {}
    with open(embedding_file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                vectors[int(record["concept_id"])] = record["vector"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise CodingError(f"{embedding_file}:{lineno}: bad embedding row: {err}") from err

    concepts: list[OntologyConcept] = []
    with open(concept_file, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        for row in reader:
            try:
                concept_id = int(row["concept_id"])
                domain = DomainTag.parse(row["domain_id"])
                name = row["concept_name"]
                vocabulary = row["vocabulary_id"]
                standard = row.get("standard_concept", "") == "S"
            except (KeyError, TypeError, ValueError) as err:
                raise CodingError(f"{concept_file}: bad concept row {row!r}: {err}") from err
            if concept_id not in vectors:
                raise CodingError(f"concept {concept_id} ({name}) has no embedding")
            concepts.append(
                OntologyConcept(
                    concept_id=concept_id,
                    concept_name=name,
                    vocabulary_id=vocabulary,
                    domain=domain,
                    standard=standard,
                    embedding=_normalize(vectors[concept_id], concept_id),
                )
            )
    return OntologyStore(concepts)


def bundled_ontology_paths() -> tuple[Path, Path]:
    """(concept TSV, embedding JSONL) shipped inside the package."""
    data = resources.files("epiquery").joinpath("data")
    return (
        Path(str(data.joinpath("concepts.tsv"))),
        Path(str(data.joinpath("concept_embeddings.jsonl"))),
    )


def candidate_concepts(
    mention: str,
    domain: DomainTag,
    store: OntologyStore,
    n: int = DEFAULT_CANDIDATE_COUNT,
    *,
    embed: EmbeddingProvider,
    all_domains: bool = False,
) -> tuple[tuple[OntologyConcept, float], ...]:
    """Top-n concepts for a mention by cosine similarity, with scores.

    The search is restricted to the placeholder's domain partition unless
    ``all_domains`` is set. Ties break toward the smaller concept_id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if all_domains:
        pool: list[OntologyConcept] = []
        for d in store.domains():
            pool.extend(store.partition(d))
        pool.sort(key=lambda c: c.concept_id)
        matrix = np.stack([c.embedding for c in pool])
    else:
        pool = list(store.partition(domain))
        maybe = store.partition_matrix(domain)
        if maybe is None:
            raise CodingError(f"ontology store has no concepts in domain {domain.value!r}")
        matrix = maybe
    query = np.asarray(embed.embed([mention])[0], dtype=np.float64)
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        raise CodingError(f"entity embedding for {mention!r} is a zero vector")
    scores = matrix @ (query / norm)
    # pool is sorted by concept_id, and stable sort on -score keeps that
    # order among ties
    order = sorted(range(len(pool)), key=lambda i: -scores[i])
    return tuple((pool[i], float(scores[i])) for i in order[:n])


_NUMBER_RE = re.compile(r"\d+")


def _parse_verdict(raw: str, n_candidates: int) -> tuple[int, ...] | None:
    """Accepted 1-based ranks from the model's answer; None means fallback."""
    text = raw.strip().lower()
    if not text:
        return None
    if text == "none" or text.startswith("none"):
        return None
    ranks = sorted(
        {
            int(m)
            for m in _NUMBER_RE.findall(text)
            if 1 <= int(m) <= n_candidates
        }
    )
    return tuple(ranks) or None


@dataclass(frozen=True)
class RankedCandidate:
    """Audit-trail row: one candidate with its rank, score, and verdict."""

    rank: int
    concept_id: int
    concept_name: str
    score: float
    accepted: bool

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "concept_id": self.concept_id,
            "concept_name": self.concept_name,
            "score": round(self.score, 6),
            "accepted": self.accepted,
        }


@dataclass(frozen=True)
class ConceptSet:
    """Resolved ids for one placeholder plus the full candidate audit."""

    placeholder: EntityPlaceholder
    accepted_ids: tuple[int, ...]
    candidates: tuple[RankedCandidate, ...]
    raw_verdict: str
    fallback: bool

    def __post_init__(self) -> None:
        if not self.accepted_ids:
            raise CodingError(f"{self.placeholder.text}: empty accepted id set")
        if list(self.accepted_ids) != sorted(self.accepted_ids):
            raise CodingError(f"{self.placeholder.text}: accepted ids not sorted")
        candidate_ids = {c.concept_id for c in self.candidates}
        if not set(self.accepted_ids) <= candidate_ids:
            raise CodingError(f"{self.placeholder.text}: accepted ids not among candidates")

    def to_dict(self) -> dict:
        return {
            "placeholder": self.placeholder.text,
            "accepted_ids": list(self.accepted_ids),
            "fallback": self.fallback,
            "raw_verdict": self.raw_verdict,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def verify_candidates(
    mention: str,
    domain: DomainTag,
    candidates: Sequence[tuple[OntologyConcept, float]],
    gateway: LlmGateway,
    config: ModelConfig,
) -> tuple[tuple[int, ...], str, bool]:
    """LLM-verify ranked candidates; returns (accepted ids, raw answer, fallback).

    Accepted ids come back sorted ascending. ``fallback`` is True when the
    answer was "none" or unparseable and the rank-1 candidate was kept.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    prompt = build_verification_prompt(mention, domain.value, [c for c, _ in candidates])
    completion = gateway.complete(prompt, config)
    ranks = _parse_verdict(completion.text, len(candidates))
    if ranks is None:
        return (candidates[0][0].concept_id,), completion.text, True
    ids = sorted(candidates[rank - 1][0].concept_id for rank in ranks)
    return tuple(ids), completion.text, False


def resolve_placeholders(
    template: SqlTemplate,
    store: OntologyStore,
    gateway: LlmGateway,
    config: ModelConfig,
    *,
    embed: EmbeddingProvider,
    n: int = DEFAULT_CANDIDATE_COUNT,
    all_domains: bool = False,
) -> dict[tuple[str, str], ConceptSet]:
    """Resolve every distinct placeholder in a template.

    Returns a mapping keyed by ``(domain, mention)``, ready for SQL
    rendering. Repeated placeholders resolve once; resolutions are
    independent of each other and of template order.
    """
    resolved: dict[tuple[str, str], ConceptSet] = {}
    for placeholder in template.placeholders:
        if placeholder.key in resolved:
            continue
        try:
            ranked = candidate_concepts(
                placeholder.mention,
                placeholder.domain,
                store,
                n,
                embed=embed,
                all_domains=all_domains,
            )
            ids, raw, fallback = verify_candidates(
                placeholder.mention, placeholder.domain, ranked, gateway, config
            )
        except (CodingError, ValueError) as err:
            raise CodingError(f"{placeholder.text}: {err}") from err
        accepted = set(ids)
        audit = tuple(
            RankedCandidate(
                rank=i + 1,
                concept_id=concept.concept_id,
                concept_name=concept.concept_name,
                score=score,
                accepted=concept.concept_id in accepted,
            )
            for i, (concept, score) in enumerate(ranked)
        )
        resolved[placeholder.key] = ConceptSet(placeholder, ids, audit, raw, fallback)
    return resolved


def expand_with_descendants(
    resolved: Mapping[tuple[str, str], ConceptSet],
    descendant_map: Mapping[int, Sequence[int]],
) -> dict[tuple[str, str], tuple[int, ...]]:
    """Widen accepted ids with their ontology descendants.

    Off the default path: verification output is used literally unless the
    caller opts into hierarchy expansion. The result maps placeholder keys
    to final id tuples, ready for SQL rendering.
    """
    widened: dict[tuple[str, str], tuple[int, ...]] = {}
    for key, concept_set in resolved.items():
        ids = set(concept_set.accepted_ids)
        for concept_id in concept_set.accepted_ids:
            ids.update(descendant_map.get(concept_id, ()))
        widened[key] = tuple(sorted(ids))
    return widened
