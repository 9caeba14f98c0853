import numpy as np
import pytest

from epiquery.coding import (
    CodingError,
    candidate_concepts,
    expand_with_descendants,
    load_ontology,
    resolve_placeholders,
    verify_candidates,
)
from epiquery.embeddings import HashEmbedder, write_embedding_file
from epiquery.gateway import LlmGateway, ModelConfig, ScriptedProvider
from epiquery.grammar import DomainTag, extract_placeholders

EMBED = HashEmbedder(dim=64)
CONFIG = ModelConfig()

HEADER = "concept_id\tconcept_name\tvocabulary_id\tdomain_id\tstandard_concept\n"


def write_ontology(tmp_path, rows, embeddings=None):
    """rows: (concept_id, concept_name, domain_id) triples."""
    concept_path = tmp_path / "concepts.tsv"
    lines = [HEADER]
    for cid, name, domain in rows:
        lines.append(f"{cid}\t{name}\tSNOMED\t{domain}\tS\n")
    concept_path.write_text("".join(lines))
    embedding_path = tmp_path / "embeddings.jsonl"
    if embeddings is None:
        embeddings = {cid: EMBED.embed([name])[0] for cid, name, _ in rows}
    write_embedding_file(embedding_path, embeddings, key="concept_id")
    return concept_path, embedding_path


def scripted_gateway(script):
    return LlmGateway(ScriptedProvider(script), sleeper=lambda s: None)


def test_load_store_counts(tmp_path):
    rows = [(i, f"concept {i}", "Condition") for i in range(1, 101)]
    store = load_ontology(*write_ontology(tmp_path, rows))
    assert len(store) == 100


def test_missing_embedding_names_concept(tmp_path):
    rows = [(1, "alpha", "Condition"), (2, "beta", "Drug")]
    embeddings = {1: EMBED.embed(["alpha"])[0]}  # beta missing
    paths = write_ontology(tmp_path, rows, embeddings)
    with pytest.raises(CodingError) as exc:
        load_ontology(*paths)
    assert "2" in str(exc.value)


def test_duplicate_concept_id(tmp_path):
    concept_path, embedding_path = write_ontology(
        tmp_path, [(1, "alpha", "Condition")]
    )
    text = concept_path.read_text()
    concept_path.write_text(text + "1\talpha\tSNOMED\tCondition\tS\n")
    with pytest.raises(CodingError) as exc:
        load_ontology(concept_path, embedding_path)
    assert "duplicate" in str(exc.value)


def test_partition_sizes_sum_to_total(tmp_path):
    rows = [
        (1, "a", "Condition"),
        (2, "b", "Condition"),
        (3, "c", "Drug"),
        (4, "d", "Procedure"),
        (5, "e", "Drug"),
    ]
    store = load_ontology(*write_ontology(tmp_path, rows))
    total = sum(len(store.partition(d)) for d in store.domains())
    assert total == len(store) == 5


def test_self_match_rank_one(tmp_path):
    rows = [
        (10, "Type 2 diabetes mellitus", "Condition"),
        (11, "Essential hypertension", "Condition"),
        (12, "Metformin", "Drug"),
    ]
    store = load_ontology(*write_ontology(tmp_path, rows))
    ranked = candidate_concepts(
        "Type 2 diabetes mellitus", DomainTag.CONDITION, store, 2, embed=EMBED
    )
    assert ranked[0][0].concept_id == 10
    assert ranked[0][1] == pytest.approx(1.0, abs=1e-6)


def test_truncation_to_partition_size(tmp_path):
    rows = [(i, f"cond {i}", "Condition") for i in range(1, 31)]
    store = load_ontology(*write_ontology(tmp_path, rows))
    ranked = candidate_concepts("anything", DomainTag.CONDITION, store, 50, embed=EMBED)
    assert len(ranked) == 30


def test_ranking_matches_brute_force(tmp_path):
    rows = [(i, f"term number {i}", "Drug") for i in range(1, 11)]
    store = load_ontology(*write_ontology(tmp_path, rows))
    mention = "term query"
    ranked = candidate_concepts(mention, DomainTag.DRUG, store, 10, embed=EMBED)

    query = EMBED.embed([mention])[0]
    oracle = []
    for cid, name, _ in rows:
        vec = EMBED.embed([name])[0]
        score = float(np.dot(query, vec))
        oracle.append((cid, score))
    oracle.sort(key=lambda t: (-t[1], t[0]))

    assert [(c.concept_id) for c, _ in ranked] == [cid for cid, _ in oracle]
    # stored vectors round-trip through 8-decimal JSONL, so scores can
    # drift a few 1e-9 from the exact-embedding oracle
    for (_, got), (_, want) in zip(ranked, oracle):
        assert got == pytest.approx(want, abs=1e-6)


def test_tie_break_ascending_concept_id(tmp_path):
    # identical names produce identical stub embeddings, so scores tie
    rows = [(99, "aspirin", "Drug"), (7, "aspirin", "Drug")]
    store = load_ontology(*write_ontology(tmp_path, rows))
    ranked = candidate_concepts("aspirin", DomainTag.DRUG, store, 2, embed=EMBED)
    assert [c.concept_id for c, _ in ranked] == [7, 99]


def test_empty_domain_partition(tmp_path):
    store = load_ontology(*write_ontology(tmp_path, [(1, "a", "Condition")]))
    with pytest.raises(CodingError):
        candidate_concepts("x", DomainTag.DRUG, store, 5, embed=EMBED)


def test_all_domains_flag(tmp_path):
    rows = [(1, "aspirin", "Drug"), (2, "aspirin allergy", "Condition")]
    store = load_ontology(*write_ontology(tmp_path, rows))
    ranked = candidate_concepts(
        "aspirin", DomainTag.CONDITION, store, 5, embed=EMBED, all_domains=True
    )
    assert {c.concept_id for c, _ in ranked} == {1, 2}


def _three_candidates(tmp_path):
    rows = [(1, "alpha", "Drug"), (2, "beta", "Drug"), (3, "gamma", "Drug")]
    store = load_ontology(*write_ontology(tmp_path, rows))
    return candidate_concepts("alpha", DomainTag.DRUG, store, 3, embed=EMBED)


def test_verify_accepts_listed_ranks(tmp_path):
    ranked = _three_candidates(tmp_path)
    rank_ids = [c.concept_id for c, _ in ranked]
    gateway = scripted_gateway(["1,3"])
    ids, raw, fallback = verify_candidates("alpha", DomainTag.DRUG, ranked, gateway, CONFIG)
    assert list(ids) == sorted([rank_ids[0], rank_ids[2]])
    assert not fallback
    assert raw == "1,3"


def test_verify_none_falls_back_to_rank_one(tmp_path):
    ranked = _three_candidates(tmp_path)
    gateway = scripted_gateway(["none"])
    ids, _, fallback = verify_candidates("alpha", DomainTag.DRUG, ranked, gateway, CONFIG)
    assert ids == (ranked[0][0].concept_id,)
    assert fallback


@pytest.mark.parametrize("answer", ["yes!", "", "absolutely", "0", "99", "none of these"])
def test_verify_malformed_falls_back(tmp_path, answer):
    ranked = _three_candidates(tmp_path)
    gateway = scripted_gateway([answer])
    ids, _, fallback = verify_candidates("alpha", DomainTag.DRUG, ranked, gateway, CONFIG)
    assert ids == (ranked[0][0].concept_id,)
    assert fallback


def test_verify_ignores_out_of_range(tmp_path):
    ranked = _three_candidates(tmp_path)
    gateway = scripted_gateway(["1, 99"])
    ids, _, fallback = verify_candidates("alpha", DomainTag.DRUG, ranked, gateway, CONFIG)
    assert ids == (ranked[0][0].concept_id,)
    assert not fallback


def test_resolve_zero_placeholders(tmp_path):
    store = load_ontology(*write_ontology(tmp_path, [(1, "a", "Condition")]))
    template = extract_placeholders("SELECT COUNT(*) FROM person")
    gateway = scripted_gateway([])
    assert resolve_placeholders(template, store, gateway, CONFIG, embed=EMBED) == {}


def test_resolve_misspelled_mention(tmp_path):
    rows = [
        (443, "Dysphagia", "Condition"),
        (444, "Dyspnea", "Condition"),
        (445, "Dysuria", "Condition"),
    ]
    store = load_ontology(*write_ontology(tmp_path, rows))
    template = extract_placeholders(
        "SELECT COUNT(*) FROM condition_occurrence "
        "WHERE condition_concept_id IN [condition@disphagia]"
    )
    gateway = scripted_gateway(["1"])
    resolved = resolve_placeholders(template, store, gateway, CONFIG, embed=EMBED)
    concept_set = resolved[("condition", "disphagia")]
    assert concept_set.accepted_ids  # non-empty
    assert concept_set.placeholder.domain is DomainTag.CONDITION
    assert set(concept_set.accepted_ids) <= {443, 444, 445}


def test_resolve_order_independent(tmp_path):
    rows = [(1, "metformin", "Drug"), (2, "type 2 diabetes", "Condition")]
    store = load_ontology(*write_ontology(tmp_path, rows))
    sql_a = (
        "SELECT COUNT(*) FROM drug_exposure WHERE drug_concept_id IN [drug@metformin] "
        "AND person_id IN (SELECT person_id FROM condition_occurrence "
        "WHERE condition_concept_id IN [condition@type 2 diabetes])"
    )
    sql_b = (
        "SELECT COUNT(*) FROM condition_occurrence "
        "WHERE condition_concept_id IN [condition@type 2 diabetes] "
        "AND person_id IN (SELECT person_id FROM drug_exposure "
        "WHERE drug_concept_id IN [drug@metformin])"
    )
    out = {}
    for label, sql in (("a", sql_a), ("b", sql_b)):
        gateway = scripted_gateway(["1", "1"])
        out[label] = resolve_placeholders(
            extract_placeholders(sql), store, gateway, CONFIG, embed=EMBED
        )
    key_drug = ("drug", "metformin")
    key_cond = ("condition", "type 2 diabetes")
    assert out["a"][key_drug].accepted_ids == out["b"][key_drug].accepted_ids
    assert out["a"][key_cond].accepted_ids == out["b"][key_cond].accepted_ids


def test_resolve_audit_subset_invariant(tmp_path):
    rows = [(i, f"drug {i}", "Drug") for i in range(1, 6)]
    store = load_ontology(*write_ontology(tmp_path, rows))
    template = extract_placeholders(
        "SELECT COUNT(*) FROM drug_exposure WHERE drug_concept_id IN [drug@drug 3]"
    )
    gateway = scripted_gateway(["1,2,4"])
    resolved = resolve_placeholders(template, store, gateway, CONFIG, embed=EMBED)
    cs = resolved[("drug", "drug 3")]
    candidate_ids = {c.concept_id for c in cs.candidates}
    assert set(cs.accepted_ids) <= candidate_ids
    accepted_rows = [c for c in cs.candidates if c.accepted]
    assert {c.concept_id for c in accepted_rows} == set(cs.accepted_ids)


def test_error_names_placeholder(tmp_path):
    store = load_ontology(*write_ontology(tmp_path, [(1, "a", "Condition")]))
    template = extract_placeholders(
        "SELECT COUNT(*) FROM drug_exposure WHERE drug_concept_id IN [drug@aspirin]"
    )
    gateway = scripted_gateway(["1"])
    with pytest.raises(CodingError) as exc:
        resolve_placeholders(template, store, gateway, CONFIG, embed=EMBED)
    assert "[drug@aspirin]" in str(exc.value)


def test_expand_with_descendants(tmp_path):
    rows = [(10, "diabetes", "Condition"), (11, "other", "Condition")]
    store = load_ontology(*write_ontology(tmp_path, rows))
    template = extract_placeholders(
        "SELECT COUNT(*) FROM condition_occurrence "
        "WHERE condition_concept_id IN [condition@diabetes]"
    )
    gateway = scripted_gateway(["1"])
    resolved = resolve_placeholders(template, store, gateway, CONFIG, embed=EMBED)
    widened = expand_with_descendants(resolved, {10: [100, 101]})
    assert widened[("condition", "diabetes")] == (10, 100, 101)
