"""Database owner: schema creation, synthetic seeding, guarded execution.

The backend is embedded SQLite behind a narrow seam (`Database`), so a
server engine can replace it without touching callers. Query execution is
defensive in both directions: an authorizer (plus a read-only reopen for
file databases) blocks every write path, and a progress-handler deadline
bounds runtime. Failures come back as `DbError` values with the engine's
message verbatim, because that text feeds the repair prompts.
"""

from __future__ import annotations

import csv
import hashlib
import random
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from datetime import date, timedelta
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from . import schema

__all__ = [
    "Database",
    "QueryResult",
    "DbError",
    "ExecutionLimits",
    "ExecutorError",
    "init_database",
    "generate_synthetic_data",
    "execute_sql",
]


class ExecutorError(RuntimeError):
    """Setup-time failure: bad target, incompatible schema, missing schema."""


@dataclass(frozen=True)
class QueryResult:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    row_count: int
    elapsed: float
    truncated: bool = False

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row arity differs from column count")

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
            "row_count": self.row_count,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class DbError:
    """A failed execution: category plus the engine's verbatim message."""

    category: str  # syntax | missing-object | type | timeout | other
    message: str

    def to_dict(self) -> dict:
        return {"category": self.category, "message": self.message}


@dataclass(frozen=True)
class ExecutionLimits:
    timeout_s: float = 30.0
    row_cap: int = 10_000


_READ_ACTIONS = {
    sqlite3.SQLITE_SELECT,
    sqlite3.SQLITE_READ,
    sqlite3.SQLITE_FUNCTION,
    sqlite3.SQLITE_RECURSIVE,
}


def _readonly_authorizer(action, *args):
    return sqlite3.SQLITE_OK if action in _READ_ACTIONS else sqlite3.SQLITE_DENY


def _permissive_authorizer(action, *args):
    return sqlite3.SQLITE_OK


class Database:
    """Handle to one OMOP-subset database (file path or ":memory:")."""

    def __init__(self, target: str | Path = ":memory:"):
        self.target = str(target)
        self.is_memory = self.target == ":memory:"
        try:
            self._conn = sqlite3.connect(self.target, check_same_thread=False)
        except sqlite3.Error as err:
            raise ExecutorError(f"cannot open database {self.target!r}: {err}") from err
        self._write_lock = threading.Lock()

    def close(self) -> None:
        self._conn.close()

    # -- schema ------------------------------------------------------------

    def init_schema(self) -> None:
        """Create the 13-table subset; idempotent on a compatible database."""
        expected = schema.tables()
        with self._write_lock:
            existing = {
                row[0]
                for row in self._conn.execute(
                    "SELECT name FROM sqlite_master WHERE type = 'table'"
                )
            }
            for table, columns in expected.items():
                if table not in existing:
                    continue
                found = tuple(
                    row[1]
                    for row in self._conn.execute(f"PRAGMA table_info({table})")
                )
                if found != columns:
                    raise ExecutorError(
                        f"existing table {table!r} is incompatible: "
                        f"has columns {found}, expected {columns}"
                    )
            self._conn.executescript(schema.ddl_text())
            self._conn.commit()

    def table_names(self) -> tuple[str, ...]:
        rows = self._conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name"
        )
        return tuple(r[0] for r in rows)

    def table_counts(self) -> dict[str, int]:
        return {
            t: self._conn.execute(f"SELECT COUNT(*) FROM {t}").fetchone()[0]
            for t in schema.tables()
        }

    def fingerprint(self) -> str:
        """Order-independent content hash across all schema tables."""
        digest = hashlib.sha256()
        for table in sorted(schema.tables()):
            digest.update(table.encode())
            rows = self._conn.execute(f"SELECT * FROM {table}").fetchall()
            for row in sorted(repr(r) for r in rows):
                digest.update(row.encode())
        return digest.hexdigest()

    # -- seeding -----------------------------------------------------------

    def _require_schema(self) -> None:
        present = set(self.table_names())
        missing = set(schema.tables()) - present
        if missing:
            raise ExecutorError(f"schema not initialized; missing tables: {sorted(missing)}")

    def seed(self, seed: int, scale: int) -> dict[str, int]:
        if scale < 1:
            raise ExecutorError("scale must be >= 1 person")
        self._require_schema()
        with self._write_lock:
            _Seeder(self._conn, seed, scale).run()
            self._conn.commit()
        return self.table_counts()

    # -- querying ----------------------------------------------------------

    def _read_connection(self) -> tuple[sqlite3.Connection, bool]:
        """A guarded connection: fresh read-only for files, shared for memory."""
        if self.is_memory:
            return self._conn, False
        conn = sqlite3.connect(f"file:{self.target}?mode=ro", uri=True, check_same_thread=False)
        return conn, True

    def execute(self, sql: str, limits: ExecutionLimits = ExecutionLimits()) -> QueryResult | DbError:
        """Run one read-only statement under the timeout and row cap."""
        conn, private = self._read_connection()
        timed_out = False

        def deadline_check():
            nonlocal timed_out
            if time.monotonic() > deadline:
                timed_out = True
                return 1
            return 0

        try:
            conn.set_authorizer(_readonly_authorizer)
            conn.set_progress_handler(deadline_check, 5_000)
            deadline = time.monotonic() + limits.timeout_s
            start = time.monotonic()
            try:
                cursor = conn.execute(sql)
                rows = cursor.fetchmany(limits.row_cap)
                truncated = cursor.fetchone() is not None
                elapsed = time.monotonic() - start
            except sqlite3.Error as err:
                category = "timeout" if timed_out else _categorize(str(err))
                return DbError(category=category, message=str(err))
            except sqlite3.Warning as err:  # raised for multi-statement strings
                return DbError(category="other", message=str(err))
            columns = tuple(d[0] for d in cursor.description) if cursor.description else ()
            return QueryResult(
                columns=columns,
                rows=tuple(tuple(r) for r in rows),
                row_count=len(rows),
                elapsed=elapsed,
                truncated=truncated,
            )
        finally:
            conn.set_progress_handler(None, 0)
            # set_authorizer(None) does not reliably clear the hook on this
            # interpreter line, so restore an allow-all callback instead
            conn.set_authorizer(_permissive_authorizer)
            if private:
                conn.close()


def _categorize(message: str) -> str:
    lowered = message.lower()
    if "syntax error" in lowered or "unrecognized token" in lowered:
        return "syntax"
    if "no such" in lowered:  # no such table / column / function
        return "missing-object"
    if "datatype mismatch" in lowered or "cannot be cast" in lowered:
        return "type"
    if "interrupted" in lowered:
        return "timeout"
    return "other"


def init_database(target: str | Path = ":memory:") -> Database:
    db = Database(target)
    db.init_schema()
    return db


def generate_synthetic_data(db: Database, seed: int, scale: int) -> dict[str, int]:
    return db.seed(seed, scale)


def execute_sql(
    db: Database, sql: str, limits: ExecutionLimits = ExecutionLimits()
) -> QueryResult | DbError:
    return db.execute(sql, limits)


# -- synthetic data ---------------------------------------------------------

GENDERS = ((8507, "MALE"), (8532, "FEMALE"))
RACES = (
    (8527, "White", 0.62),
    (8516, "Black or African American", 0.18),
    (8515, "Asian", 0.10),
    (8657, "American Indian or Alaska Native", 0.05),
    (8557, "Native Hawaiian or Other Pacific Islander", 0.05),
)
ETHNICITIES = ((38003564, "Not Hispanic or Latino", 0.85), (38003563, "Hispanic or Latino", 0.15))
VISIT_TYPES = ((9202, "Outpatient Visit", 0.70), (9201, "Inpatient Visit", 0.20), (9203, "Emergency Room Visit", 0.10))
SPECIALTIES = (
    (38004446, "General Practice"),
    (38004451, "Cardiology"),
    (38004455, "Endocrinology"),
    (38004458, "Nephrology"),
    (38004462, "Oncology"),
)
UNITS = (
    (8840, "milligram per deciliter"),
    (8876, "millimeter mercury column"),
    (9529, "kilogram"),
    (8582, "centimeter"),
)
TYPE_CONCEPT = (32817, "EHR")

STATES = (
    ("CA", "Los Angeles"), ("CA", "San Francisco"), ("NY", "New York"),
    ("NY", "Buffalo"), ("TX", "Houston"), ("TX", "Dallas"), ("FL", "Miami"),
    ("FL", "Tampa"), ("IL", "Chicago"), ("PA", "Philadelphia"),
    ("OH", "Columbus"), ("GA", "Atlanta"), ("NC", "Charlotte"),
    ("MI", "Detroit"), ("WA", "Seattle"), ("MA", "Boston"),
    ("AZ", "Phoenix"), ("CO", "Denver"), ("OR", "Portland"), ("MN", "Minneapolis"),
)

_MEASURE_RANGES = {
    "Hemoglobin A1c measurement": (4.5, 12.0, 8840),
    "Blood glucose measurement": (60.0, 350.0, 8840),
    "Total cholesterol measurement": (120.0, 320.0, 8840),
    "LDL cholesterol measurement": (50.0, 220.0, 8840),
    "HDL cholesterol measurement": (25.0, 90.0, 8840),
    "Triglycerides measurement": (50.0, 400.0, 8840),
    "Systolic blood pressure": (90.0, 200.0, 8876),
    "Diastolic blood pressure": (50.0, 120.0, 8876),
    "Body weight": (40.0, 150.0, 9529),
    "Body height": (140.0, 200.0, 8582),
    "Body mass index": (15.0, 50.0, 9529),
}
_DEFAULT_RANGE = (1.0, 100.0, 8840)

_EVENTS_START = date(2008, 1, 1)
_EVENTS_SPAN = 900  # days, through mid-2010


def _load_clinical_concepts() -> list[tuple[int, str, str, str]]:
    """(concept_id, name, domain, vocabulary) from the bundled TSV."""
    path = resources.files("epiquery").joinpath("data").joinpath("concepts.tsv")
    with path.open("r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        return [
            (int(r["concept_id"]), r["concept_name"], r["domain_id"], r["vocabulary_id"])
            for r in reader
        ]


def _load_hierarchy() -> list[tuple[int, int, int, int]]:
    path = resources.files("epiquery").joinpath("data").joinpath("concept_hierarchy.tsv")
    with path.open("r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        return [
            (
                int(r["ancestor_concept_id"]),
                int(r["descendant_concept_id"]),
                int(r["min_levels_of_separation"]),
                int(r["max_levels_of_separation"]),
            )
            for r in reader
        ]


def _pick_weighted(rnd: random.Random, options) -> int:
    roll = rnd.random()
    acc = 0.0
    for concept_id, _, weight in options:
        acc += weight
        if roll < acc:
            return concept_id
    return options[-1][0]


class _Seeder:
    """Deterministic claims-like generator: same seed and scale, same bytes."""

    def __init__(self, conn: sqlite3.Connection, seed: int, scale: int):
        self.conn = conn
        self.rnd = random.Random(seed)
        self.scale = scale
        self.concepts = _load_clinical_concepts()
        self.by_domain: dict[str, list[tuple[int, str]]] = {}
        for concept_id, name, domain, _ in self.concepts:
            self.by_domain.setdefault(domain, []).append((concept_id, name))

    def run(self) -> None:
        for table in schema.tables():
            self.conn.execute(f"DELETE FROM {table}")
        self._concepts()
        self._locations_providers()
        self._persons_and_events()

    def _concepts(self) -> None:
        rows = []
        for concept_id, name, domain, vocabulary in self.concepts:
            klass = {
                "Condition": "Clinical Finding",
                "Drug": "Ingredient",
                "Procedure": "Procedure",
                "Measurement": "Lab Test",
                "Observation": "Observable Entity",
                "Device": "Physical Object",
            }[domain]
            rows.append((concept_id, name, domain, vocabulary, klass, "S", str(concept_id)))
        for cid, name in GENDERS:
            rows.append((cid, name, "Gender", "Gender", "Gender", "S", str(cid)))
        for cid, name, _ in RACES:
            rows.append((cid, name, "Race", "Race", "Race", "S", str(cid)))
        for cid, name, _ in ETHNICITIES:
            rows.append((cid, name, "Ethnicity", "Ethnicity", "Ethnicity", "S", str(cid)))
        for cid, name, _ in VISIT_TYPES:
            rows.append((cid, name, "Visit", "Visit", "Visit", "S", str(cid)))
        for cid, name in SPECIALTIES:
            rows.append((cid, name, "Provider", "Specialty", "Specialty", "S", str(cid)))
        for cid, name in UNITS:
            rows.append((cid, name, "Unit", "UCUM", "Unit", "S", str(cid)))
        rows.append((TYPE_CONCEPT[0], TYPE_CONCEPT[1], "Type Concept", "Type Concept", "Type Concept", "S", str(TYPE_CONCEPT[0])))
        self.conn.executemany("INSERT INTO concept VALUES (?,?,?,?,?,?,?)", rows)

        ancestor_rows = [(cid, cid, 0, 0) for cid, *_ in self.concepts]
        ancestor_rows.extend(_load_hierarchy())
        self.conn.executemany(
            "INSERT INTO concept_ancestor VALUES (?,?,?,?)", ancestor_rows
        )

    def _locations_providers(self) -> None:
        self.conn.executemany(
            "INSERT INTO location VALUES (?,?,?,?)",
            [
                (i + 1, city, state, f"{10000 + 137 * i}")
                for i, (state, city) in enumerate(STATES)
            ],
        )
        providers = []
        for i in range(15):
            specialty = SPECIALTIES[i % len(SPECIALTIES)][0]
            providers.append((i + 1, f"Provider {i + 1}", specialty, None))
        self.conn.executemany("INSERT INTO provider VALUES (?,?,?,?)", providers)

    def _event_date(self) -> str:
        return (_EVENTS_START + timedelta(days=self.rnd.randrange(_EVENTS_SPAN))).isoformat()

    def _persons_and_events(self) -> None:
        rnd = self.rnd
        persons = []
        periods = []
        visits = []
        conditions = []
        drugs = []
        procedures = []
        measurements = []
        observations = []
        deaths = []
        visit_id = 0
        for person_id in range(1, self.scale + 1):
            gender = GENDERS[0][0] if rnd.random() < 0.5 else GENDERS[1][0]
            year = rnd.randint(1920, 2005)
            month = rnd.randint(1, 12)
            day = rnd.randint(1, 28)
            race = _pick_weighted(rnd, RACES)
            ethnicity = _pick_weighted(rnd, ETHNICITIES)
            location = rnd.randint(1, len(STATES))
            provider = rnd.randint(1, 15)
            persons.append(
                (person_id, gender, year, month, day, race, ethnicity, location, provider)
            )

            period_start = date(2005, 1, 1) + timedelta(days=rnd.randrange(365))
            period_end = date(2010, 12, 31) - timedelta(days=rnd.randrange(180))
            periods.append(
                (person_id, person_id, period_start.isoformat(), period_end.isoformat(), TYPE_CONCEPT[0])
            )

            person_visits = []
            for _ in range(rnd.randint(0, 8)):
                visit_id += 1
                concept = _pick_weighted(rnd, VISIT_TYPES)
                start = _EVENTS_START + timedelta(days=rnd.randrange(_EVENTS_SPAN))
                stay = rnd.randint(1, 14) if concept == 9201 else 0
                visits.append(
                    (
                        visit_id,
                        person_id,
                        concept,
                        start.isoformat(),
                        (start + timedelta(days=stay)).isoformat(),
                        TYPE_CONCEPT[0],
                        rnd.randint(1, 15),
                    )
                )
                person_visits.append(visit_id)

            def visit_ref():
                if person_visits and rnd.random() < 0.7:
                    return rnd.choice(person_visits)
                return None

            for _ in range(rnd.randint(0, 6)):
                concept_id, _ = rnd.choice(self.by_domain["Condition"])
                start = _EVENTS_START + timedelta(days=rnd.randrange(_EVENTS_SPAN))
                end = start + timedelta(days=rnd.randint(0, 120)) if rnd.random() < 0.6 else None
                conditions.append(
                    (
                        len(conditions) + 1,
                        person_id,
                        concept_id,
                        start.isoformat(),
                        end.isoformat() if end else None,
                        TYPE_CONCEPT[0],
                        visit_ref(),
                    )
                )

            for _ in range(rnd.randint(0, 6)):
                concept_id, _ = rnd.choice(self.by_domain["Drug"])
                start = _EVENTS_START + timedelta(days=rnd.randrange(_EVENTS_SPAN))
                days_supply = rnd.choice((7, 14, 30, 90))
                drugs.append(
                    (
                        len(drugs) + 1,
                        person_id,
                        concept_id,
                        start.isoformat(),
                        (start + timedelta(days=days_supply)).isoformat(),
                        TYPE_CONCEPT[0],
                        float(days_supply * rnd.choice((1, 2))),
                        days_supply,
                        visit_ref(),
                    )
                )

            for _ in range(rnd.randint(0, 3)):
                concept_id, _ = rnd.choice(self.by_domain["Procedure"])
                procedures.append(
                    (
                        len(procedures) + 1,
                        person_id,
                        concept_id,
                        self._event_date(),
                        TYPE_CONCEPT[0],
                        visit_ref(),
                    )
                )

            for _ in range(rnd.randint(0, 8)):
                concept_id, name = rnd.choice(self.by_domain["Measurement"])
                lo, hi, unit = _MEASURE_RANGES.get(name, _DEFAULT_RANGE)
                value = round(rnd.uniform(lo, hi), 1)
                measurements.append(
                    (
                        len(measurements) + 1,
                        person_id,
                        concept_id,
                        self._event_date(),
                        TYPE_CONCEPT[0],
                        value,
                        unit,
                        None,
                        visit_ref(),
                    )
                )

            # device use is recorded as an observation; there is no
            # separate device exposure table in this schema subset
            obs_pool = self.by_domain["Observation"] + self.by_domain["Device"]
            for _ in range(rnd.randint(0, 3)):
                concept_id, _ = rnd.choice(obs_pool)
                as_string = rnd.choice(("yes", "no", None))
                observations.append(
                    (
                        len(observations) + 1,
                        person_id,
                        concept_id,
                        self._event_date(),
                        TYPE_CONCEPT[0],
                        None,
                        as_string,
                        visit_ref(),
                    )
                )

            if rnd.random() < 0.08:
                death_day = date(2010, 7, 1) + timedelta(days=rnd.randrange(180))
                cause, _ = rnd.choice(self.by_domain["Condition"])
                deaths.append((person_id, death_day.isoformat(), TYPE_CONCEPT[0], cause))

        self.conn.executemany("INSERT INTO person VALUES (?,?,?,?,?,?,?,?,?)", persons)
        self.conn.executemany("INSERT INTO observation_period VALUES (?,?,?,?,?)", periods)
        self.conn.executemany("INSERT INTO visit_occurrence VALUES (?,?,?,?,?,?,?)", visits)
        self.conn.executemany("INSERT INTO condition_occurrence VALUES (?,?,?,?,?,?,?)", conditions)
        self.conn.executemany("INSERT INTO drug_exposure VALUES (?,?,?,?,?,?,?,?,?)", drugs)
        self.conn.executemany("INSERT INTO procedure_occurrence VALUES (?,?,?,?,?,?)", procedures)
        self.conn.executemany("INSERT INTO measurement VALUES (?,?,?,?,?,?,?,?,?)", measurements)
        self.conn.executemany("INSERT INTO observation VALUES (?,?,?,?,?,?,?,?)", observations)
        self.conn.executemany("INSERT INTO death VALUES (?,?,?,?)", deaths)
