import pytest

from epiquery import schema
from epiquery.prompting import (
    ANSWER_ROW_CAP,
    build_answer_prompt,
    build_generation_prompt,
    build_repair_prompt,
    build_verification_prompt,
    template_version,
)

SCHEMA = schema.schema_summary()


class FakeTable:
    def __init__(self, columns, rows):
        self.columns = columns
        self.rows = rows


class FakeConcept:
    def __init__(self, concept_id, concept_name):
        self.concept_id = concept_id
        self.concept_name = concept_name


def test_simple_mode_has_conventions_no_directives():
    spec = build_generation_prompt("How many patients?", "simple", [], SCHEMA)
    assert "[domain@mention]" in spec.user
    assert "person" in spec.user  # schema present
    assert "Detailed directives:" not in spec.user
    assert spec.mode == "simple"
    assert spec.exemplars == ()


def test_advanced_mode_appends_directives_and_exemplar():
    spec = build_generation_prompt(
        "How many patients?",
        "advanced",
        [("How many visits?", "SELECT COUNT(*) AS n FROM visit_occurrence")],
        SCHEMA,
    )
    assert "Detailed directives:" in spec.user
    assert "How many visits?" in spec.user
    assert "SELECT COUNT(*) AS n FROM visit_occurrence" in spec.user
    # the eight directive topics
    for topic in (
        "Concept IDs",
        "Race analysis",
        "Geographical analysis",
        "Date filters",
        "Column naming",
        "Patient count",
        "Age calculation",
        "Validity review",
    ):
        assert topic in spec.user
    # closing self-review instruction
    assert "review the whole query once more" in spec.user


def test_exemplars_render_in_given_order():
    spec = build_generation_prompt(
        "q?",
        "simple",
        [("first question", "SELECT 1 AS a"), ("second question", "SELECT 2 AS b")],
        SCHEMA,
    )
    assert spec.user.index("first question") < spec.user.index("second question")


def test_advanced_contains_simple_conventions_block():
    simple = build_generation_prompt("q?", "simple", [], SCHEMA)
    advanced = build_generation_prompt("q?", "advanced", [], SCHEMA)
    rules = simple.user[simple.user.index("Rules:") : simple.user.index("Question:")]
    core = rules.split("\n")[0:5]  # Rules: header plus the four numbered rules
    for line in core:
        assert line in advanced.user


def test_builders_are_pure():
    a = build_generation_prompt("q?", "advanced", [("x", "SELECT 1")], SCHEMA)
    b = build_generation_prompt("q?", "advanced", [("x", "SELECT 1")], SCHEMA)
    assert a.rendered() == b.rendered()


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        build_generation_prompt("q?", "fancy", [], SCHEMA)


def test_repair_embeds_sql_and_error_verbatim():
    spec = build_repair_prompt("q?", "SELEC 1", "syntax error near SELEC", 1)
    assert "SELEC 1" in spec.user
    assert "syntax error near SELEC" in spec.user
    assert "attempt 1 of 3" in spec.user


def test_repair_attempt_out_of_range():
    with pytest.raises(ValueError):
        build_repair_prompt("q?", "SELECT 1", "err", 4)
    with pytest.raises(ValueError):
        build_repair_prompt("q?", "SELECT 1", "err", 0)


def test_repair_survives_braces_and_quotes():
    error = 'near "${}": syntax error in {"json": \'quoted\'}'
    sql = "SELECT '{a}' AS ${weird} FROM person"
    spec = build_repair_prompt("q?", sql, error, 2)
    assert error in spec.user
    assert sql in spec.user


def test_verification_numbered_list():
    candidates = [FakeConcept(100 + i, f"term {i}") for i in range(3)]
    spec = build_verification_prompt("aspirin", "drug", candidates)
    assert "1. 100 term 0" in spec.user
    assert "3. 102 term 2" in spec.user
    assert "none" in spec.user  # response protocol documented


def test_verification_fifty_candidates_all_listed():
    candidates = [FakeConcept(1000 + i, f"concept {i}") for i in range(50)]
    spec = build_verification_prompt("x", "condition", candidates)
    for i in range(1, 51):
        assert f"{i}. {999 + i} concept {i - 1}" in spec.user


def test_verification_duplicate_terms_distinct_ids():
    candidates = [FakeConcept(11, "same term"), FakeConcept(22, "same term")]
    spec = build_verification_prompt("x", "condition", candidates)
    assert "1. 11 same term" in spec.user
    assert "2. 22 same term" in spec.user


def test_verification_requires_candidates():
    with pytest.raises(ValueError):
        build_verification_prompt("x", "drug", [])


def test_answer_single_cell():
    spec = build_answer_prompt("How many?", FakeTable(["patient_count"], [(42,)]))
    assert "patient_count" in spec.user
    assert "42" in spec.user
    assert "1 row" in spec.user


def test_answer_empty_table():
    spec = build_answer_prompt("How many?", FakeTable(["n"], []))
    assert "0 rows" in spec.user
    assert "(no rows)" in spec.user


def test_answer_truncation_notice():
    rows = [(i,) for i in range(150)]
    spec = build_answer_prompt("List ids", FakeTable(["person_id"], rows))
    assert f"truncated to the first {ANSWER_ROW_CAP}" in spec.user
    assert "149" not in spec.user  # beyond the cap, not serialized
    assert "99" in spec.user


def test_template_version_stable():
    assert template_version() == template_version()
    assert len(template_version()) == 12
