"""Placeholder grammar for SQL generated before medical codes are known.

Grammar: ``placeholder := "[" domain "@" mention "]"`` where domain is one
of the six OMOP clinical domains and mention is one or more characters
excluding ``]`` and ``@``. Square brackets that do not match the grammar
are left untouched; identifier-shaped tags that are not a known domain
are errors rather than silently passed through.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping

from . import sqlscan

__all__ = [
    "DomainTag",
    "EntityPlaceholder",
    "SqlTemplate",
    "TemplateIssue",
    "PlaceholderGrammarError",
    "RenderError",
    "extract_placeholders",
    "render_sql",
    "validate_template",
]


class DomainTag(str, Enum):
    """The six OMOP clinical domains a placeholder may carry."""

    CONDITION = "condition"
    DRUG = "drug"
    PROCEDURE = "procedure"
    MEASUREMENT = "measurement"
    OBSERVATION = "observation"
    DEVICE = "device"

    @classmethod
    def parse(cls, text: str) -> "DomainTag":
        return cls(text.lower())

    @property
    def mask_label(self) -> str:
        """Generic label used for entity masking, e.g. ``<DRUG>``."""
        return f"<{self.value.upper()}>"


_VALID_TAGS = frozenset(t.value for t in DomainTag)

# Identifier-shaped tag followed by '@': placeholder syntax was intended.
_OPENER_RE = re.compile(r"\[([A-Za-z_][A-Za-z0-9_]*)@")
_PLACEHOLDER_RE = re.compile(r"\[([A-Za-z_][A-Za-z0-9_]*)@([^\]@\[]*)\]")


class PlaceholderGrammarError(ValueError):
    """A bracket region uses placeholder syntax but violates the grammar."""

    def __init__(self, kind: str, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.kind = kind  # unknown-domain | unterminated | empty-mention
        self.offset = offset


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class EntityPlaceholder:
    """One ``[domain@mention]`` token found in a SQL template."""

    domain: DomainTag
    mention: str
    span: tuple[int, int]

    @property
    def key(self) -> tuple[str, str]:
        """Resolution key: placeholders with equal (domain, mention) share codes."""
        return (self.domain.value, self.mention)

    @property
    def text(self) -> str:
        return f"[{self.domain.value}@{self.mention}]"


@dataclass(frozen=True)
class SqlTemplate:
    """SQL text plus the placeholders extracted from it."""

    raw: str
    placeholders: tuple[EntityPlaceholder, ...]

    def substitute(self, replace: Callable[[EntityPlaceholder], str]) -> str:
        """Splice replacement text over each placeholder span."""
        parts: list[str] = []
        cursor = 0
        for ph in self.placeholders:
            start, end = ph.span
            parts.append(self.raw[cursor:start])
            parts.append(replace(ph))
            cursor = end
        parts.append(self.raw[cursor:])
        return "".join(parts)


def extract_placeholders(sql_text: str) -> SqlTemplate:
    """Extract every maximal ``[domain@mention]`` region from SQL text.

    Raises PlaceholderGrammarError for identifier-shaped tags that are not
    a known domain, for empty mentions, and for unterminated openers.
    """
    placeholders: list[EntityPlaceholder] = []
    pos = 0
    while True:
        opener = _OPENER_RE.search(sql_text, pos)
        if opener is None:
            break
        tag = opener.group(1)
        full = _PLACEHOLDER_RE.match(sql_text, opener.start())
        if tag.lower() not in _VALID_TAGS:
            raise PlaceholderGrammarError(
                "unknown-domain", f"unknown domain tag {tag!r}", opener.start()
            )
        if full is None:
            raise PlaceholderGrammarError(
                "unterminated", f"unterminated placeholder [{tag}@", opener.start()
            )
        mention = full.group(2)
        if not mention:
            raise PlaceholderGrammarError(
                "empty-mention", f"empty mention in [{tag}@]", opener.start()
            )
        placeholders.append(
            EntityPlaceholder(
                domain=DomainTag.parse(tag),
                mention=mention,
                span=(full.start(), full.end()),
            )
        )
        pos = full.end()
    return SqlTemplate(raw=sql_text, placeholders=tuple(placeholders))


def _accepted_ids(value) -> list[int]:
    ids = list(value.accepted_ids) if hasattr(value, "accepted_ids") else list(value)
    return sorted(int(i) for i in ids)


def render_sql(
    template: SqlTemplate,
    resolution: Mapping[tuple[str, str], Iterable[int]],
) -> str:
    """Replace each placeholder with a parenthesized ascending concept-id list.

    resolution maps (domain, mention) keys to concept ids (or to any object
    with an ``accepted_ids`` attribute). Every placeholder must resolve to a
    non-empty id set.
    """

    def replace(ph: EntityPlaceholder) -> str:
        if ph.key not in resolution:
            raise RenderError(f"no resolution for placeholder {ph.text}")
        ids = _accepted_ids(resolution[ph.key])
        if not ids:
            raise RenderError(f"empty concept set for placeholder {ph.text}")
        return "(" + ", ".join(str(i) for i in ids) + ")"

    return template.substitute(replace)


@dataclass(frozen=True)
class TemplateIssue:
    code: str  # unknown-domain | unterminated | empty-mention | unbalanced-parens | non-select | multiple-statements | unscannable
    message: str
    offset: int | None = None


def validate_template(sql_text: str) -> list[TemplateIssue]:
    """Report structural problems without raising; issues are data.

    Checks placeholder syntax, paren balance, and that the statement is a
    single SELECT (the corpus is read-only).
    """
    issues: list[TemplateIssue] = []

    try:
        extract_placeholders(sql_text)
    except PlaceholderGrammarError as err:
        issues.append(TemplateIssue(err.kind, str(err), err.offset))

    try:
        tokens = sqlscan.tokenize(sql_text)
    except sqlscan.SqlScanError as err:
        issues.append(TemplateIssue("unscannable", str(err), err.offset))
        return issues

    if not sqlscan.parens_balanced(tokens):
        issues.append(TemplateIssue("unbalanced-parens", "unbalanced parentheses"))

    statements = sqlscan.split_statements(tokens)
    if len(statements) > 1:
        issues.append(
            TemplateIssue(
                "multiple-statements",
                "more than one statement",
                statements[1][0].offset,
            )
        )
    for stmt in statements[:1]:
        head = stmt[0]
        if not (head.kind == "word" and head.text.lower() in ("select", "with")):
            issues.append(
                TemplateIssue("non-select", f"statement starts with {head.text!r}", head.offset)
            )
    if not statements:
        issues.append(TemplateIssue("non-select", "empty statement"))
    return issues
