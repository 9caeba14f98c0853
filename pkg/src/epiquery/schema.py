"""Access to the bundled OMOP-CDM subset schema.

The DDL file is the source of truth; this module parses it once into
table/column metadata used for schema prompts, seeding, and recognizing
unqualified column references when profiling corpus SQL.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

__all__ = [
    "ddl_text",
    "tables",
    "table_names",
    "column_names",
    "schema_summary",
]

_CREATE_RE = re.compile(
    r"CREATE TABLE IF NOT EXISTS (\w+) \((.*?)\);", re.DOTALL | re.IGNORECASE
)
_COLUMN_RE = re.compile(r"^\s*(\w+)\s+(?:INTEGER|REAL|TEXT)", re.IGNORECASE)


def ddl_text() -> str:
    return resources.files("epiquery.data").joinpath("omop_ddl.sql").read_text("utf-8")


@lru_cache(maxsize=1)
def tables() -> dict[str, tuple[str, ...]]:
    """Mapping of table name to its column names, in DDL order."""
    out: dict[str, tuple[str, ...]] = {}
    for name, body in _CREATE_RE.findall(ddl_text()):
        cols = []
        for line in body.splitlines():
            m = _COLUMN_RE.match(line)
            if m:
                cols.append(m.group(1).lower())
        out[name.lower()] = tuple(cols)
    return out


def table_names() -> frozenset[str]:
    return frozenset(tables())


def column_names() -> frozenset[str]:
    """Distinct column names across all tables (person_id counts once)."""
    return frozenset(c for cols in tables().values() for c in cols)


def schema_summary() -> str:
    """Compact one-table-per-line schema rendering for prompts."""
    lines = []
    for name, cols in tables().items():
        lines.append(f"{name}({', '.join(cols)})")
    return "\n".join(lines)
