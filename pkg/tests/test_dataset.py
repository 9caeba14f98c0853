import json

import pytest

from epiquery.dataset import (
    DatasetError,
    EntityMention,
    QuestionSqlPair,
    compute_stats,
    load_dataset,
    paraphrase_groups,
    save_dataset,
)
from epiquery.grammar import DomainTag

KNOWN = {
    "person_id",
    "year_of_birth",
    "gender_concept_id",
    "condition_concept_id",
    "drug_concept_id",
}


def make_pair(pid, question, sql, group, entities=()):
    return QuestionSqlPair(
        id=pid,
        question=question,
        sql_template=sql,
        paraphrase_group=group,
        entities=tuple(entities),
    )


def _pairs_fixture():
    # Hand-counted stats fixture. Lengths and structure computed by eye:
    #   p1 question len 24, sql len 27: flat count, 1 table, 0 conditions,
    #      nesting 1, 0 known columns, 0 entities
    #   p2 question len 10, sql len 52: 1 table, 1 condition (=), nesting 1,
    #      2 known columns (person_id, year_of_birth), 0 entities
    #   p3 question len 16, sql len 112: 2 tables, 2 conditions (IN + =),
    #      nesting 2, columns {person_id, condition_concept_id}, 1 entity
    p1 = make_pair("p1", "How many persons exist?", "SELECT COUNT(*) FROM person", "g1")
    p2 = make_pair(
        "p2",
        "Born 1950?",
        "SELECT person_id FROM person WHERE year_of_birth = 1950",
        "g1",
    )
    p3 = make_pair(
        "p3",
        "Who has diabetes?",
        "SELECT COUNT(*) FROM person WHERE person_id IN "
        "(SELECT person_id FROM condition_occurrence WHERE condition_concept_id IN [condition@diabetes])",
        "g2",
        entities=[EntityMention("diabetes", DomainTag.CONDITION)],
    )
    return [p1, p2, p3]


def test_stats_hand_counted():
    pairs = _pairs_fixture()
    stats = compute_stats(pairs, known_columns=KNOWN)
    assert stats.n_pairs == 3

    q_lens = [len(p.question) for p in pairs]
    assert stats.question_length_chars.mean == pytest.approx(sum(q_lens) / 3)
    s_lens = [len(p.sql_template) for p in pairs]
    assert stats.sql_length_chars.mean == pytest.approx(sum(s_lens) / 3)

    assert stats.n_distinct_tables == 2  # person, condition_occurrence
    # columns: person_id, year_of_birth, condition_concept_id
    assert stats.n_distinct_columns == 3

    assert stats.nesting_levels.mean == pytest.approx((1 + 1 + 2) / 3)
    assert stats.logical_conditions.mean == pytest.approx((0 + 1 + 2) / 3)
    assert stats.tables.mean == pytest.approx((1 + 1 + 2) / 3)
    assert stats.medical_entities.mean == pytest.approx((0 + 0 + 1) / 3)
    assert stats.unparseable_ids == ()


def test_roundtrip(tmp_path):
    pairs = _pairs_fixture()
    path = tmp_path / "corpus.jsonl"
    save_dataset(pairs, path)
    loaded = load_dataset(path)
    assert loaded == tuple(pairs)


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps(
        {
            "id": "a",
            "question": "ok?",
            "sql_template": "SELECT 1",
            "paraphrase_group": "g",
            "entities": [],
        }
    )
    path.write_text(good + "\n" + "{not json}\n")
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert ":2" in str(exc.value)


def test_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    rec = {
        "id": "a",
        "question": "ok?",
        "sql_template": "SELECT 1",
        "paraphrase_group": "g",
        "entities": [],
    }
    path.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert "duplicate" in str(exc.value).lower()


def test_placeholder_entity_mismatch_rejected(tmp_path):
    path = tmp_path / "mismatch.jsonl"
    rec = {
        "id": "a",
        "question": "Any aspirin users?",
        "sql_template": "SELECT COUNT(*) FROM drug_exposure WHERE drug_concept_id IN [drug@aspirin]",
        "paraphrase_group": "g",
        "entities": [],
    }
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert "aspirin" in str(exc.value)


def test_group_map():
    pairs = _pairs_fixture()
    groups = paraphrase_groups(pairs)
    assert set(groups) == {"g1", "g2"}
    assert groups["g1"] == ("p1", "p2")
    assert groups["g2"] == ("p3",)
