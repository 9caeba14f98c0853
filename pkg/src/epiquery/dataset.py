"""Question-SQL corpus: loading, validation, and summary statistics.

The corpus is line-delimited JSON, one pair per line, and doubles as the
retrieval knowledge base and the evaluation benchmark. Loaded datasets are
immutable; concurrent pipeline runs share them freely.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from . import grammar, schema, sqlscan
from .grammar import DomainTag

__all__ = [
    "EntityMention",
    "QuestionSqlPair",
    "DatasetStats",
    "DatasetError",
    "load_dataset",
    "save_dataset",
    "bundled_corpus_path",
    "compute_stats",
    "paraphrase_groups",
]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class EntityMention:
    mention: str
    domain: DomainTag


@dataclass(frozen=True)
class QuestionSqlPair:
    """One corpus record: a free-form question and its reference SQL template."""

    id: str
    question: str
    sql_template: str
    paraphrase_group: str
    entities: tuple[EntityMention, ...] = ()
    tags: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "sql_template": self.sql_template,
            "paraphrase_group": self.paraphrase_group,
            "entities": [
                {"mention": e.mention, "domain": e.domain.value} for e in self.entities
            ],
            "tags": list(self.tags),
        }


def _pair_from_record(record: dict, where: str) -> QuestionSqlPair:
    try:
        entities = tuple(
            EntityMention(mention=e["mention"], domain=DomainTag.parse(e["domain"]))
            for e in record.get("entities", [])
        )
        pair = QuestionSqlPair(
            id=str(record["id"]),
            question=str(record["question"]),
            sql_template=str(record["sql_template"]),
            paraphrase_group=str(record["paraphrase_group"]),
            entities=entities,
            tags=tuple(str(t) for t in record.get("tags", [])),
        )
    except (KeyError, ValueError, TypeError) as err:
        raise DatasetError(f"{where}: bad record: {err}") from err
    _check_pair(pair, where)
    return pair


def _check_pair(pair: QuestionSqlPair, where: str) -> None:
    if not pair.paraphrase_group:
        raise DatasetError(f"{where}: empty paraphrase_group")
    try:
        template = grammar.extract_placeholders(pair.sql_template)
    except grammar.PlaceholderGrammarError as err:
        raise DatasetError(f"{where}: sql_template does not parse: {err}") from err
    declared = {(e.domain, e.mention) for e in pair.entities}
    for ph in template.placeholders:
        if (ph.domain, ph.mention) not in declared:
            raise DatasetError(
                f"{where}: placeholder {ph.text} has no matching entities entry"
            )


def load_dataset(path: str | Path) -> tuple[QuestionSqlPair, ...]:
    """Load and validate a JSONL corpus file, preserving file order."""
    pairs: list[QuestionSqlPair] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"{where}: malformed JSON: {err.msg}") from err
            if not isinstance(record, dict):
                raise DatasetError(f"{where}: expected an object")
            pair = _pair_from_record(record, where)
            if pair.id in seen:
                raise DatasetError(
                    f"{where}: duplicate id {pair.id!r} (first seen on line {seen[pair.id]})"
                )
            seen[pair.id] = lineno
            pairs.append(pair)
    return tuple(pairs)


def save_dataset(pairs: Iterable[QuestionSqlPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")


def bundled_corpus_path() -> Path:
    """Path of the corpus shipped inside the package."""
    return Path(str(resources.files("epiquery.data").joinpath("corpus.jsonl")))


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float

    @staticmethod
    def of(values: Sequence[float]) -> "MeanStd":
        if not values:
            return MeanStd(0.0, 0.0)
        mean = statistics.fmean(values)
        std = statistics.pstdev(values) if len(values) > 1 else 0.0
        return MeanStd(mean, std)


@dataclass(frozen=True)
class DatasetStats:
    """Corpus-level summary: counts plus per-query means and standard deviations."""

    n_pairs: int
    n_distinct_tables: int
    n_distinct_columns: int
    logical_conditions: MeanStd
    nesting_levels: MeanStd
    tables: MeanStd
    columns: MeanStd
    medical_entities: MeanStd
    question_length_chars: MeanStd
    sql_length_chars: MeanStd
    unparseable_ids: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        def ms(v: MeanStd) -> dict:
            return {"mean": round(v.mean, 4), "std": round(v.std, 4)}

        return {
            "n_pairs": self.n_pairs,
            "n_distinct_tables": self.n_distinct_tables,
            "n_distinct_columns": self.n_distinct_columns,
            "logical_conditions": ms(self.logical_conditions),
            "nesting_levels": ms(self.nesting_levels),
            "tables": ms(self.tables),
            "columns": ms(self.columns),
            "medical_entities": ms(self.medical_entities),
            "question_length_chars": ms(self.question_length_chars),
            "sql_length_chars": ms(self.sql_length_chars),
            "unparseable_ids": list(self.unparseable_ids),
        }


def compute_stats(
    pairs: Sequence[QuestionSqlPair],
    known_columns: frozenset[str] | None = None,
) -> DatasetStats:
    """Profile the corpus by parsing each sql_template.

    Unparseable templates are excluded from the structural means but stay in
    the length means, and are flagged in the output. Lengths are characters.
    """
    if not pairs:
        raise DatasetError("compute_stats requires a non-empty corpus")
    if known_columns is None:
        known_columns = schema.column_names()

    all_tables: set[str] = set()
    all_columns: set[str] = set()
    conditions: list[int] = []
    nesting: list[int] = []
    per_tables: list[int] = []
    per_columns: list[int] = []
    entities: list[int] = []
    q_len = [len(p.question) for p in pairs]
    s_len = [len(p.sql_template) for p in pairs]
    unparseable: list[str] = []

    for pair in pairs:
        try:
            metrics = sqlscan.measure_sql(pair.sql_template, known_columns)
            template = grammar.extract_placeholders(pair.sql_template)
        except (sqlscan.SqlScanError, grammar.PlaceholderGrammarError):
            unparseable.append(pair.id)
            continue
        all_tables |= metrics.tables
        all_columns |= metrics.columns
        conditions.append(metrics.conditions)
        nesting.append(metrics.nesting)
        per_tables.append(len(metrics.tables))
        per_columns.append(len(metrics.columns))
        entities.append(len(template.placeholders))

    return DatasetStats(
        n_pairs=len(pairs),
        n_distinct_tables=len(all_tables),
        n_distinct_columns=len(all_columns),
        logical_conditions=MeanStd.of(conditions),
        nesting_levels=MeanStd.of(nesting),
        tables=MeanStd.of(per_tables),
        columns=MeanStd.of(per_columns),
        medical_entities=MeanStd.of(entities),
        question_length_chars=MeanStd.of(q_len),
        sql_length_chars=MeanStd.of(s_len),
        unparseable_ids=tuple(unparseable),
    )


def paraphrase_groups(pairs: Sequence[QuestionSqlPair]) -> dict[str, tuple[str, ...]]:
    """Partition pair ids by paraphrase_group; singleton groups allowed."""
    groups: dict[str, list[str]] = {}
    for pair in pairs:
        groups.setdefault(pair.paraphrase_group, []).append(pair.id)
    return {g: tuple(ids) for g, ids in groups.items()}
