"""Lightweight SQL tokenizer and structural metrics.

This is not a full SQL grammar. The corpus dialect is narrow (read-only
analytical SELECTs over a fixed schema), so a token scanner plus a small
region state machine is enough to count nesting depth, predicates, and
table/column references. Placeholders of the form ``[domain@mention]``
are scanned as atomic tokens so that templates can be measured before
medical codes are resolved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "SqlScanError",
    "Token",
    "QueryMetrics",
    "tokenize",
    "measure_sql",
    "split_statements",
    "parens_balanced",
]


class SqlScanError(ValueError):
    """Raised when the scanner cannot make sense of the input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Token:
    kind: str  # word | number | string | qident | op | placeholder
    text: str
    offset: int


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<line_comment>--[^\n]*)
    | (?P<block_comment>/\*.*?\*/)
    | (?P<placeholder>\[[A-Za-z_][A-Za-z0-9_]*@[^\]@\[]*\])
    | (?P<string>'(?:[^']|'')*')
    | (?P<qident>"(?:[^"]|"")*")
    | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
    | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op><=|>=|<>|!=|\|\||[=<>(),;.*+\-/%])
    """,
    re.VERBOSE | re.DOTALL,
)

# Words that can never be table/column identifiers in the corpus dialect.
_KEYWORDS = frozenset(
    """
    select from where group by having order limit offset as on join inner left
    right full outer cross and or not in like between is null exists case when
    then else end distinct union all intersect except with count sum avg min
    max abs round cast asc desc using values
    """.split()
)

# Predicate-introducing words counted as one logical condition each.
# BETWEEN counts once; IS / IS NOT NULL count once (NOT is skipped).
_PREDICATE_WORDS = frozenset({"like", "in", "between", "is", "exists"})

_COMPARISON_OPS = frozenset({"=", "<", ">", "<=", ">=", "<>", "!="})

# Region transitions triggered by keywords, applied to the current frame.
_REGION_BY_KEYWORD = {
    "select": "select",
    "from": "from",
    "where": "cond",
    "having": "cond",
    "on": "cond",
    "using": "cond",
    "group": "group",
    "order": "order",
    "limit": "limit",
    "offset": "limit",
    "union": None,
    "intersect": None,
    "except": None,
    "with": "with",
    "values": None,
}


def tokenize(sql: str) -> list[Token]:
    """Scan SQL into tokens, dropping whitespace and comments."""
    tokens: list[Token] = []
    pos = 0
    n = len(sql)
    while pos < n:
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            if sql[pos] in "['\"":
                raise SqlScanError("unterminated literal or bracket", pos)
            raise SqlScanError(f"unexpected character {sql[pos]!r}", pos)
        kind = m.lastgroup
        if kind not in ("ws", "line_comment", "block_comment"):
            tokens.append(Token(kind, m.group(), m.start()))
        pos = m.end()
    return tokens


def split_statements(tokens: list[Token]) -> list[list[Token]]:
    """Split a token stream on top-level semicolons; empty parts dropped."""
    parts: list[list[Token]] = [[]]
    for tok in tokens:
        if tok.kind == "op" and tok.text == ";":
            parts.append([])
        else:
            parts[-1].append(tok)
    return [p for p in parts if p]


def parens_balanced(tokens: list[Token]) -> bool:
    depth = 0
    for tok in tokens:
        if tok.kind == "op" and tok.text == "(":
            depth += 1
        elif tok.kind == "op" and tok.text == ")":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


@dataclass
class QueryMetrics:
    """Structural profile of one SELECT statement.

    nesting counts the outermost SELECT as level 1. conditions counts
    comparison/predicate operators inside WHERE/HAVING/ON regions.
    tables and columns hold the distinct identifiers referenced
    (CTE names and aliases excluded).
    """

    nesting: int = 0
    conditions: int = 0
    tables: set[str] = field(default_factory=set)
    columns: set[str] = field(default_factory=set)


@dataclass
class _Frame:
    region: str | None


def measure_sql(sql: str, known_columns: frozenset[str] | set[str] | None = None) -> QueryMetrics:
    """Compute QueryMetrics for a single SELECT statement.

    known_columns, when given, is used to recognize unqualified column
    references; without it only dotted references (alias.column) and
    dotted-qualifier exclusion are reliable.
    """
    tokens = tokenize(sql)
    statements = split_statements(tokens)
    if not statements:
        raise SqlScanError("empty statement", 0)
    if len(statements) > 1:
        raise SqlScanError("multiple statements", statements[1][0].offset)
    return _measure_tokens(statements[0], known_columns)


def _measure_tokens(tokens: list[Token], known_columns) -> QueryMetrics:
    metrics = QueryMetrics()
    frames: list[_Frame] = [_Frame(region=None)]
    select_depths: list[int] = []  # paren depth of each open SELECT scope
    depth = 0
    cte_names: set[str] = set()
    aliases: set[str] = set()

    expect_table = False  # next bare word is a table name
    expect_cte_name = False  # next bare word names a CTE

    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        frame = frames[-1]

        if tok.kind == "op":
            if tok.text == "(":
                depth += 1
                frames.append(_Frame(region=frame.region))
                # a parenthesized table expression is not a bare table name
                expect_table = False
            elif tok.text == ")":
                depth -= 1
                if depth < 0:
                    raise SqlScanError("unbalanced parenthesis", tok.offset)
                if len(frames) > 1:
                    frames.pop()
                while select_depths and select_depths[-1] > depth:
                    select_depths.pop()
            elif tok.text == "," and frame.region == "from":
                expect_table = True
            elif tok.text == "," and frame.region == "with" and depth == 0:
                expect_cte_name = True
            elif tok.text in _COMPARISON_OPS and frame.region == "cond":
                metrics.conditions += 1
            i += 1
            continue

        if tok.kind != "word":
            i += 1
            continue

        word = tok.text.lower()

        if word == "select":
            while select_depths and select_depths[-1] >= depth:
                select_depths.pop()
            select_depths.append(depth)
            metrics.nesting = max(metrics.nesting, len(select_depths))
            frame.region = "select"
            expect_table = False
            i += 1
            continue

        if word in _REGION_BY_KEYWORD and word != "select":
            frame.region = _REGION_BY_KEYWORD[word]
            if word == "from":
                expect_table = True
            if word == "with":
                expect_cte_name = True
            i += 1
            continue

        if word == "join":
            frame.region = "from"
            expect_table = True
            i += 1
            continue

        if word in _KEYWORDS:
            if word in _PREDICATE_WORDS and frame.region == "cond":
                metrics.conditions += 1
            if word == "as":
                # consume the alias identifier that follows
                if i + 1 < n and tokens[i + 1].kind == "word":
                    alias_word = tokens[i + 1].text.lower()
                    if alias_word not in _KEYWORDS:
                        aliases.add(alias_word)
                        i += 2
                        continue
            i += 1
            continue

        # Bare identifier. Dotted references are grouped here.
        if i + 2 < n and tokens[i + 1].kind == "op" and tokens[i + 1].text == ".":
            if tokens[i + 2].kind == "word":
                metrics.columns.add(tokens[i + 2].text.lower())
                i += 3
                continue
            if tokens[i + 2].kind == "op" and tokens[i + 2].text == "*":
                i += 3  # alias.* selects all columns; none referenced by name
                continue

        next_is_call = i + 1 < n and tokens[i + 1].kind == "op" and tokens[i + 1].text == "("

        if expect_cte_name:
            cte_names.add(word)
            expect_cte_name = False
        elif expect_table and frame.region == "from" and not next_is_call:
            if word not in cte_names:
                metrics.tables.add(word)
            expect_table = False
        elif frame.region == "from":
            # trailing bare word after a table is its alias
            aliases.add(word)
        elif next_is_call:
            pass  # function name
        elif frame.region in ("select", "cond", "group", "order"):
            if known_columns is not None:
                if word in known_columns:
                    metrics.columns.add(word)
            elif word not in aliases and word not in cte_names:
                metrics.columns.add(word)
        i += 1

    if depth != 0:
        raise SqlScanError("unbalanced parenthesis", tokens[-1].offset)
    if metrics.nesting == 0:
        raise SqlScanError("no SELECT found", tokens[0].offset if tokens else 0)
    return metrics
