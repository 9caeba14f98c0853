"""Prompt assembly for generation, repair, coding verification, and answers.

Every builder is a pure function: equal inputs produce byte-identical
prompts, which is what makes recorded LLM transcripts replayable. Wording
lives in plain-text template files under ``templates/`` with ``$name``
substitution slots, so prompts can be revised without touching code; the
active wording is fingerprinted by :func:`template_version` and recorded in
run traces.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Mapping, Protocol, Sequence

__all__ = [
    "PromptSpec",
    "MAX_REPAIR_ATTEMPTS",
    "ANSWER_ROW_CAP",
    "build_extraction_prompt",
    "build_generation_prompt",
    "build_repair_prompt",
    "build_verification_prompt",
    "build_answer_prompt",
    "template_version",
]

MAX_REPAIR_ATTEMPTS = 3
ANSWER_ROW_CAP = 100

_TEMPLATE_FILES = (
    "extraction_system.txt",
    "extraction_user.txt",
    "generation_system.txt",
    "generation_user.txt",
    "generation_directives.txt",
    "repair_user.txt",
    "verification_system.txt",
    "verification_user.txt",
    "answer_system.txt",
    "answer_user.txt",
)

_cache: dict[str, str] = {}


def _template(name: str) -> str:
    if name not in _cache:
        path = resources.files("epiquery").joinpath("templates").joinpath(name)
        _cache[name] = path.read_text(encoding="utf-8")
    return _cache[name]


def template_version() -> str:
    """Short fingerprint of all template files, recorded in run traces."""
    digest = hashlib.sha256()
    for name in _TEMPLATE_FILES:
        digest.update(name.encode())
        digest.update(b"\x00")
        digest.update(_template(name).encode())
    return digest.hexdigest()[:12]


@dataclass(frozen=True)
class PromptSpec:
    """A fully rendered chat prompt plus the context it was built from.

    ``system`` and ``user`` are the texts sent to the model. ``mode``,
    ``exemplars``, and ``metadata`` exist for the run trace; they never
    alter the rendered text after construction.
    """

    system: str
    user: str
    mode: str = "simple"
    exemplars: tuple[tuple[str, str], ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict)

    def rendered(self) -> str:
        """Canonical serialization used for transcript keying."""
        return f"[system]\n{self.system}\n[user]\n{self.user}"


def build_extraction_prompt(question: str) -> PromptSpec:
    """Build the medical-entity extraction prompt.

    The model is asked for a strict JSON array of {mention, domain}
    objects, one per distinct entity, with [] for entity-free questions.
    """
    user = Template(_template("extraction_user.txt")).substitute(question=question)
    return PromptSpec(
        system=_template("extraction_system.txt").rstrip("\n"),
        user=user,
        metadata={"kind": "extraction", "template_version": template_version()},
    )


def _exemplars_block(exemplars: Sequence[tuple[str, str]]) -> str:
    if not exemplars:
        return ""
    parts = ["\nSolved examples, most similar first:\n"]
    for question, sql in exemplars:
        parts.append(f"\nQuestion: {question}\nSQL:\n```sql\n{sql}\n```\n")
    return "".join(parts)


def build_generation_prompt(
    question: str,
    mode: str,
    exemplars: Sequence[tuple[str, str]],
    schema_summary: str,
) -> PromptSpec:
    """Build the SQL-generation prompt.

    ``mode`` selects the wording tier: "simple" carries only the core
    conventions, "advanced" appends the detailed directives block and a
    closing self-review instruction. Exemplars are rendered in the order
    given; callers pass them most-similar first.
    """
    if mode not in ("simple", "advanced"):
        raise ValueError(f"unknown prompt mode: {mode!r}")
    directives = ""
    if mode == "advanced":
        directives = "\n" + _template("generation_directives.txt")
    user = Template(_template("generation_user.txt")).substitute(
        schema=schema_summary,
        directives_block=directives,
        exemplars_block=_exemplars_block(exemplars),
        question=question,
    )
    return PromptSpec(
        system=_template("generation_system.txt").rstrip("\n"),
        user=user,
        mode=mode,
        exemplars=tuple(exemplars),
        metadata={"kind": "generation", "template_version": template_version()},
    )


def build_repair_prompt(
    question: str,
    failed_sql: str,
    db_error_text: str,
    attempt_number: int,
) -> PromptSpec:
    """Build the self-correction prompt for a query that failed to execute.

    The failed SQL and the database error are embedded verbatim.
    ``attempt_number`` is 1-based and capped at ``MAX_REPAIR_ATTEMPTS``.
    """
    if not 1 <= attempt_number <= MAX_REPAIR_ATTEMPTS:
        raise ValueError(
            f"attempt_number must be in 1..{MAX_REPAIR_ATTEMPTS}, got {attempt_number}"
        )
    user = Template(_template("repair_user.txt")).substitute(
        question=question,
        failed_sql=failed_sql,
        db_error=db_error_text,
        attempt=str(attempt_number),
        max_attempts=str(MAX_REPAIR_ATTEMPTS),
    )
    return PromptSpec(
        system=_template("generation_system.txt").rstrip("\n"),
        user=user,
        metadata={
            "kind": "repair",
            "attempt": str(attempt_number),
            "template_version": template_version(),
        },
    )


class _Concept(Protocol):
    concept_id: int
    concept_name: str


def build_verification_prompt(
    mention: str,
    domain: str,
    candidates: Sequence[_Concept],
) -> PromptSpec:
    """Build the concept-verification prompt.

    Candidates are numbered from 1 in the order given, each line carrying
    the concept id and preferred term. The model is asked for a strict
    comma-separated list of accepted numbers, or the word "none".
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    lines = [
        f"{i}. {c.concept_id} {c.concept_name}"
        for i, c in enumerate(candidates, start=1)
    ]
    user = Template(_template("verification_user.txt")).substitute(
        mention=mention,
        domain=domain,
        candidate_list="\n".join(lines),
    )
    return PromptSpec(
        system=_template("verification_system.txt").rstrip("\n"),
        user=user,
        metadata={
            "kind": "verification",
            "n_candidates": str(len(candidates)),
            "template_version": template_version(),
        },
    )


class _Table(Protocol):
    columns: Sequence[str]
    rows: Sequence[Sequence[object]]


def _format_cell(value: object) -> str:
    if value is None:
        return "NULL"
    return str(value)


def build_answer_prompt(
    question: str,
    result_table: _Table,
    row_cap: int = ANSWER_ROW_CAP,
) -> PromptSpec:
    """Build the answer-articulation prompt from an executed result table.

    At most ``row_cap`` rows are serialized; when the table is larger the
    prompt says so explicitly so the model does not treat the excerpt as
    complete.
    """
    if row_cap < 1:
        raise ValueError("row_cap must be positive")
    total = len(result_table.rows)
    shown = list(result_table.rows[:row_cap])
    header = " | ".join(str(c) for c in result_table.columns)
    body = [" | ".join(_format_cell(v) for v in row) for row in shown]
    if total == 0:
        table_block = header + "\n(no rows)"
        row_note = "0 rows"
    else:
        table_block = header + "\n" + "\n".join(body)
        row_note = f"{total} row{'s' if total != 1 else ''}"
        if total > len(shown):
            row_note += f", truncated to the first {len(shown)}"
    user = Template(_template("answer_user.txt")).substitute(
        question=question,
        row_note=row_note,
        table_block=table_block,
    )
    return PromptSpec(
        system=_template("answer_system.txt").rstrip("\n"),
        user=user,
        metadata={
            "kind": "answer",
            "rows_total": str(total),
            "rows_shown": str(len(shown)),
            "template_version": template_version(),
        },
    )
