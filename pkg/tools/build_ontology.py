"""Author the bundled mini ontology.

Writes three package-data files:
  concepts.tsv             clinical vocabulary for medical coding
  concept_embeddings.jsonl one stub embedding per concept
  concept_hierarchy.tsv    transitive ancestor closure (without self rows)

Concept ids are synthetic and domain-prefixed; administrative vocabulary
(gender, race, visit type) is not part of coding and lives in the seeder.
Run from the repository root: python3 tools/build_ontology.py
"""

from __future__ import annotations

import sys
from collections import defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from epiquery.embeddings import HashEmbedder, write_embedding_file

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "epiquery" / "data"

# (domain, vocabulary, concept_class, id block start)
DOMAIN_META = {
    "Condition": ("SNOMED", "Clinical Finding", 440000),
    "Drug": ("RxNorm", "Ingredient", 450000),
    "Procedure": ("SNOMED", "Procedure", 460000),
    "Measurement": ("LOINC", "Lab Test", 470000),
    "Observation": ("SNOMED", "Observable Entity", 480000),
    "Device": ("SNOMED", "Physical Object", 490000),
}

CONDITIONS = [
    "Diabetes mellitus",
    "Type 2 diabetes mellitus",
    "Type 1 diabetes mellitus",
    "Gestational diabetes mellitus",
    "Prediabetes",
    "Hypertensive disorder",
    "Essential hypertension",
    "Secondary hypertension",
    "Cardiovascular disease",
    "Ischemic heart disease",
    "Acute myocardial infarction",
    "Angina pectoris",
    "Heart failure",
    "Congestive heart failure",
    "Atrial fibrillation",
    "Cerebrovascular accident",
    "Transient ischemic attack",
    "Peripheral vascular disease",
    "Coronary arteriosclerosis",
    "Chronic obstructive pulmonary disease",
    "Asthma",
    "Pneumonia",
    "Acute bronchitis",
    "Chronic sinusitis",
    "Influenza",
    "Emphysema",
    "Chronic kidney disease",
    "Acute renal failure",
    "Kidney stone",
    "Urinary tract infection",
    "Gastroesophageal reflux disease",
    "Peptic ulcer",
    "Irritable bowel syndrome",
    "Dysphagia",
    "Cholelithiasis",
    "Acute appendicitis",
    "Diverticulosis of colon",
    "Hypothyroidism",
    "Hyperthyroidism",
    "Obesity",
    "Hyperlipidemia",
    "Hypercholesterolemia",
    "Vitamin D deficiency",
    "Osteoarthritis",
    "Rheumatoid arthritis",
    "Osteoporosis",
    "Low back pain",
    "Gout",
    "Major depressive disorder",
    "Generalized anxiety disorder",
    "Bipolar disorder",
    "Schizophrenia",
    "Alzheimer's disease",
    "Parkinson's disease",
    "Epilepsy",
    "Migraine",
    "Insomnia",
    "Malignant neoplastic disease",
    "Malignant neoplasm of breast",
    "Malignant tumor of lung",
    "Malignant tumor of prostate",
    "Malignant tumor of colon",
    "Leukemia",
    "Malignant melanoma",
    "Sepsis",
    "Cellulitis",
    "Chronic hepatitis C",
    "Anemia",
    "Iron deficiency anemia",
    "Dehydration",
    "Hypokalemia",
    "Chest pain",
    "Headache",
    "Fever",
    "Cough",
    "Fatigue",
]

DRUGS = [
    "HMG CoA reductase inhibitor",
    "Atorvastatin",
    "Simvastatin",
    "Rosuvastatin",
    "Pravastatin",
    "ACE inhibitor",
    "Lisinopril",
    "Enalapril",
    "Ramipril",
    "Losartan",
    "Valsartan",
    "Metoprolol",
    "Atenolol",
    "Carvedilol",
    "Propranolol",
    "Amlodipine",
    "Diltiazem",
    "Hydrochlorothiazide",
    "Furosemide",
    "Spironolactone",
    "Metformin",
    "Insulin glargine",
    "Glipizide",
    "Sitagliptin",
    "Empagliflozin",
    "Warfarin",
    "Apixaban",
    "Rivaroxaban",
    "Clopidogrel",
    "Aspirin",
    "Omeprazole",
    "Pantoprazole",
    "Levothyroxine",
    "Prednisone",
    "Hydrocortisone",
    "Albuterol",
    "Fluticasone",
    "Montelukast",
    "Gabapentin",
    "Pregabalin",
    "Ibuprofen",
    "Naproxen",
    "Acetaminophen",
    "Morphine",
    "Oxycodone",
    "Tramadol",
    "Sertraline",
    "Fluoxetine",
    "Escitalopram",
    "Venlafaxine",
    "Duloxetine",
    "Lorazepam",
    "Zolpidem",
    "Amoxicillin",
    "Azithromycin",
    "Ciprofloxacin",
    "Doxycycline",
    "Cephalexin",
    "Vancomycin",
]

PROCEDURES = [
    "Coronary artery bypass grafting",
    "Percutaneous coronary intervention",
    "Coronary angiography",
    "Echocardiography",
    "Electrocardiogram",
    "Cardiac catheterization",
    "Hemodialysis",
    "Kidney transplant",
    "Colonoscopy",
    "Upper gastrointestinal endoscopy",
    "Cholecystectomy",
    "Appendectomy",
    "Total knee replacement",
    "Total hip replacement",
    "Spinal fusion",
    "Cataract extraction",
    "Tonsillectomy",
    "Cesarean section",
    "Hysterectomy",
    "Mastectomy",
    "Prostatectomy",
    "Chemotherapy",
    "Radiation therapy",
    "Blood transfusion",
    "Mechanical ventilation",
    "Tracheostomy",
    "Influenza vaccination",
    "Mammography",
    "Computed tomography of chest",
    "Magnetic resonance imaging of brain",
]

MEASUREMENTS = [
    "Hemoglobin A1c measurement",
    "Blood glucose measurement",
    "Serum creatinine measurement",
    "Blood urea nitrogen measurement",
    "Estimated glomerular filtration rate",
    "Total cholesterol measurement",
    "LDL cholesterol measurement",
    "HDL cholesterol measurement",
    "Triglycerides measurement",
    "Systolic blood pressure",
    "Diastolic blood pressure",
    "Heart rate",
    "Respiratory rate",
    "Body temperature",
    "Body weight",
    "Body height",
    "Body mass index",
    "Oxygen saturation measurement",
    "Hemoglobin measurement",
    "Hematocrit measurement",
    "White blood cell count",
    "Platelet count",
    "Serum sodium measurement",
    "Serum potassium measurement",
    "Serum calcium measurement",
    "Alanine aminotransferase measurement",
    "Aspartate aminotransferase measurement",
    "Alkaline phosphatase measurement",
    "Total bilirubin measurement",
    "Thyroid stimulating hormone measurement",
]

OBSERVATIONS = [
    "Current every day smoker",
    "Former smoker",
    "Never smoker",
    "Alcohol use",
    "Family history of diabetes mellitus",
    "Family history of malignant neoplasm of breast",
    "History of myocardial infarction",
    "History of cerebrovascular accident",
    "Allergy to penicillin",
    "Allergy to peanut",
    "Fall risk assessment",
    "Pain severity score",
    "Pregnancy status",
    "Advance directive status",
    "Housing instability",
    "Food insecurity",
    "Employment status",
    "Marital status",
    "Immunization status",
    "Functional status assessment",
]

DEVICES = [
    "Cardiac pacemaker",
    "Implantable cardioverter defibrillator",
    "Coronary artery stent",
    "Insulin pump",
    "Continuous positive airway pressure device",
    "Wheelchair",
    "Hearing aid",
    "Central venous catheter",
    "Urinary catheter",
    "Orthopedic cast",
]

# parent name -> child names (within one domain); closure is computed below
HIERARCHY = {
    "Diabetes mellitus": [
        "Type 2 diabetes mellitus",
        "Type 1 diabetes mellitus",
        "Gestational diabetes mellitus",
    ],
    "Hypertensive disorder": ["Essential hypertension", "Secondary hypertension"],
    "Cardiovascular disease": [
        "Hypertensive disorder",
        "Ischemic heart disease",
        "Heart failure",
        "Atrial fibrillation",
        "Cerebrovascular accident",
        "Peripheral vascular disease",
    ],
    "Ischemic heart disease": [
        "Acute myocardial infarction",
        "Angina pectoris",
        "Coronary arteriosclerosis",
    ],
    "Heart failure": ["Congestive heart failure"],
    "Malignant neoplastic disease": [
        "Malignant neoplasm of breast",
        "Malignant tumor of lung",
        "Malignant tumor of prostate",
        "Malignant tumor of colon",
        "Leukemia",
        "Malignant melanoma",
    ],
    "Anemia": ["Iron deficiency anemia"],
    "HMG CoA reductase inhibitor": [
        "Atorvastatin",
        "Simvastatin",
        "Rosuvastatin",
        "Pravastatin",
    ],
    "ACE inhibitor": ["Lisinopril", "Enalapril", "Ramipril"],
}


def build_concepts():
    rows = []
    ids = {}
    for domain, names in (
        ("Condition", CONDITIONS),
        ("Drug", DRUGS),
        ("Procedure", PROCEDURES),
        ("Measurement", MEASUREMENTS),
        ("Observation", OBSERVATIONS),
        ("Device", DEVICES),
    ):
        vocabulary, concept_class, block = DOMAIN_META[domain]
        for i, name in enumerate(names, start=1):
            concept_id = block + i
            assert name not in ids, f"duplicate concept name {name!r}"
            ids[name] = concept_id
            rows.append((concept_id, name, vocabulary, domain, concept_class))
    return rows, ids


def closure(ids):
    children = defaultdict(list)
    for parent, kids in HIERARCHY.items():
        for kid in kids:
            children[ids[parent]].append(ids[kid])
    pairs = {}
    for root in list(children):
        frontier = [(root, 0)]
        while frontier:
            node, depth = frontier.pop()
            for child in children.get(node, []):
                level = depth + 1
                key = (root, child)
                lo, hi = pairs.get(key, (level, level))
                pairs[key] = (min(lo, level), max(hi, level))
                frontier.append((child, level))
    return sorted(
        (anc, desc, lo, hi) for (anc, desc), (lo, hi) in pairs.items()
    )


def main():
    rows, ids = build_concepts()
    DATA_DIR.mkdir(parents=True, exist_ok=True)

    with open(DATA_DIR / "concepts.tsv", "w", encoding="utf-8") as fh:
        fh.write("concept_id\tconcept_name\tvocabulary_id\tdomain_id\tstandard_concept\n")
        for concept_id, name, vocabulary, domain, _ in rows:
            fh.write(f"{concept_id}\t{name}\t{vocabulary}\t{domain}\tS\n")

    embedder = HashEmbedder(dim=128)
    vectors = {
        concept_id: embedder.embed([name])[0] for concept_id, name, *_ in rows
    }
    write_embedding_file(
        DATA_DIR / "concept_embeddings.jsonl", vectors, key="concept_id"
    )

    with open(DATA_DIR / "concept_hierarchy.tsv", "w", encoding="utf-8") as fh:
        fh.write(
            "ancestor_concept_id\tdescendant_concept_id\t"
            "min_levels_of_separation\tmax_levels_of_separation\n"
        )
        for anc, desc, lo, hi in closure(ids):
            fh.write(f"{anc}\t{desc}\t{lo}\t{hi}\n")

    print(f"{len(rows)} concepts, {len(closure(ids))} hierarchy rows -> {DATA_DIR}")


if __name__ == "__main__":
    main()
