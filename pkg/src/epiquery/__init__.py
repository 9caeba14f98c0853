"""Natural-language epidemiological questions over an OMOP-style claims database.

The package turns a clinical question into an executable SQL query in stages:
entity extraction, question masking, exemplar retrieval, SQL generation with
a bounded self-repair loop, medical-code resolution for ``[domain@mention]``
placeholders, guarded execution, and answer articulation. Each module is
importable on its own; ``epiquery.pipeline`` wires them together,
``epiquery.service`` exposes the pipeline over HTTP with human checkpoints,
and ``epiquery.cli`` is the command-line entry point.
"""

__version__ = "0.1.0"
