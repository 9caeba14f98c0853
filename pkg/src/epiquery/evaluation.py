"""Benchmark harness: accuracy and executability of pipeline modes.

Every dataset question is run through each configured mode and its result
compared against the reference query's answer. "Within tolerance" means
relative deviation from the reference value of at most τ (default 10%,
boundary inclusive), with a zero reference requiring an exact zero. A
single numeric cell compares as a scalar; anything else falls back to a
table rule — columns aligned by name, rows sorted canonically, numeric
cells under the scalar rule and the rest under exact equality — and the
report records which rule applied so scalar-only analysis stays
recoverable.

Reference answers are resolved with rank-1 codes and executed once, then
cached: the corpus guarantees reference mentions equal concept preferred
terms, so rank-1 is exact for them. During each case the evaluated
question's own paraphrase group is excluded from retrieval.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import QuestionSqlPair
from .executor import DbError, QueryResult, execute_sql
from .grammar import extract_placeholders, render_sql
from .pipeline import (
    PipelineConfig,
    PipelineRuntime,
    answer_question,
    rank1_resolution,
)

__all__ = [
    "EvaluationError",
    "compare_answers",
    "CaseVerdict",
    "ModeReport",
    "EvalReport",
    "reference_results",
    "run_benchmark",
    "render_markdown",
    "render_csv",
    "render_report",
]

DEFAULT_TOLERANCE = 0.10


class EvaluationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# answer comparison


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _scalar_ok(reference: float, generated: float, tolerance: float) -> bool:
    rf, gf = float(reference), float(generated)
    if math.isnan(rf) and math.isnan(gf):
        return True
    if rf == gf:
        return True
    if rf == 0.0:
        return False
    deviation = abs(gf - rf) / abs(rf)
    return deviation <= tolerance


def _deviation(reference: float, generated: float) -> float | None:
    rf, gf = float(reference), float(generated)
    if rf == 0.0 or math.isnan(rf) or math.isnan(gf):
        return None
    return abs(gf - rf) / abs(rf)


def _json_cell(value: object) -> object:
    if isinstance(value, bytes):
        return value.hex()
    return value


def _cell_sort_key(value: object) -> tuple[int, float, str]:
    if value is None:
        return (0, 0.0, "")
    if _is_number(value):
        number = float(value)
        if math.isnan(number):
            return (1, math.inf, "nan")
        return (1, number, "")
    if isinstance(value, bytes):
        return (3, 0.0, value.hex())
    return (2, 0.0, str(value))


def _canonical_table(result: QueryResult) -> tuple[list[str], list[tuple]]:
    """Columns sorted by lowercased name, rows sorted by cell keys."""
    lowered = [str(c).lower() for c in result.columns]
    order = sorted(range(len(lowered)), key=lambda i: (lowered[i], i))
    names = [lowered[i] for i in order]
    rows = [tuple(row[i] for i in order) for row in result.rows]
    rows.sort(key=lambda row: tuple(_cell_sort_key(v) for v in row))
    return names, rows


def _cells_match(reference: object, generated: object, tolerance: float) -> bool:
    if _is_number(reference) and _is_number(generated):
        return _scalar_ok(float(reference), float(generated), tolerance)
    if _is_number(reference) != _is_number(generated):
        return False
    return reference == generated


def compare_answers(
    reference: QueryResult,
    generated: QueryResult,
    tolerance: float = DEFAULT_TOLERANCE,
) -> tuple[bool, dict]:
    """Judge a generated result against the reference, within tolerance.

    Returns (correct, report). Mismatches are verdicts, never errors. The
    report names the rule applied and, for table comparisons, the first
    mismatching cell.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    scalar_ref = (
        reference.row_count == 1
        and len(reference.columns) == 1
        and _is_number(reference.rows[0][0])
    )
    scalar_gen = (
        generated.row_count == 1
        and len(generated.columns) == 1
        and _is_number(generated.rows[0][0])
    )
    if scalar_ref and scalar_gen:
        ref_value = reference.rows[0][0]
        gen_value = generated.rows[0][0]
        correct = _scalar_ok(float(ref_value), float(gen_value), tolerance)
        return correct, {
            "rule": "scalar",
            "tolerance": tolerance,
            "reference": _json_cell(ref_value),
            "generated": _json_cell(gen_value),
            "deviation": _deviation(float(ref_value), float(gen_value)),
            "correct": correct,
        }

    report: dict = {"rule": "table", "tolerance": tolerance}
    ref_names, ref_rows = _canonical_table(reference)
    gen_names, gen_rows = _canonical_table(generated)
    if ref_names != gen_names:
        report.update(
            correct=False,
            mismatch="columns",
            reference_columns=ref_names,
            generated_columns=gen_names,
        )
        return False, report
    report["columns"] = ref_names
    if len(ref_rows) != len(gen_rows):
        report.update(
            correct=False,
            mismatch="row-count",
            reference_rows=len(ref_rows),
            generated_rows=len(gen_rows),
        )
        return False, report
    report["n_rows"] = len(ref_rows)
    for row_index, (ref_row, gen_row) in enumerate(zip(ref_rows, gen_rows)):
        for col_index, (ref_cell, gen_cell) in enumerate(zip(ref_row, gen_row)):
            if not _cells_match(ref_cell, gen_cell, tolerance):
                report.update(
                    correct=False,
                    mismatch="cell",
                    first_mismatch={
                        "row": row_index,
                        "column": ref_names[col_index],
                        "reference": _json_cell(ref_cell),
                        "generated": _json_cell(gen_cell),
                    },
                )
                return False, report
    report["correct"] = True
    return True, report


# ---------------------------------------------------------------------------
# verdicts and reports


@dataclass(frozen=True)
class CaseVerdict:
    """One question under one mode: did its SQL run, and was it right."""

    case_id: str
    run_id: str
    executable: bool
    correct: bool
    infrastructure: bool
    detail: dict

    def __post_init__(self) -> None:
        if self.correct and not self.executable:
            raise EvaluationError(f"{self.case_id}: correct implies executable")
        if self.infrastructure and self.executable:
            raise EvaluationError(f"{self.case_id}: infrastructure cases are non-executable")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "run_id": self.run_id,
            "executable": self.executable,
            "correct": self.correct,
            "infrastructure": self.infrastructure,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ModeReport:
    """Aggregates for one mode; rates exclude infrastructure failures."""

    mode: str
    config: dict
    verdicts: tuple[CaseVerdict, ...]
    accuracy: float
    executability: float
    n_cases: int
    n_infrastructure: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= self.executability <= 1.0:
            raise EvaluationError(
                f"{self.mode}: need 0 <= Acc ({self.accuracy}) <= Exec"
                f" ({self.executability}) <= 1"
            )

    @classmethod
    def from_verdicts(
        cls, mode: str, config: Mapping, verdicts: Sequence[CaseVerdict]
    ) -> "ModeReport":
        infra = sum(1 for v in verdicts if v.infrastructure)
        denominator = len(verdicts) - infra
        accuracy = (
            sum(1 for v in verdicts if v.correct) / denominator if denominator else 0.0
        )
        executability = (
            sum(1 for v in verdicts if v.executable) / denominator
            if denominator
            else 0.0
        )
        return cls(
            mode=mode,
            config=dict(config),
            verdicts=tuple(verdicts),
            accuracy=accuracy,
            executability=executability,
            n_cases=len(verdicts),
            n_infrastructure=infra,
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config": self.config,
            "accuracy": self.accuracy,
            "executability": self.executability,
            "n_cases": self.n_cases,
            "n_infrastructure": self.n_infrastructure,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


@dataclass(frozen=True)
class EvalReport:
    """The whole benchmark: one ModeReport per mode, in run order."""

    modes: tuple[ModeReport, ...]
    n_questions: int

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "modes": [m.to_dict() for m in self.modes],
        }

    def to_json(self) -> str:
        """Canonical serialization: no timestamps, stable key order."""
        return json.dumps(
            self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False
        ) + "\n"


# ---------------------------------------------------------------------------
# the benchmark loop


def reference_results(
    pairs: Sequence[QuestionSqlPair],
    runtime: PipelineRuntime,
) -> dict[str, QueryResult]:
    """Resolve and execute every reference template once, keyed by pair id.

    Paraphrase groups share a template, so each distinct template runs a
    single time. A failing reference is a broken corpus and raises.
    """
    by_template: dict[str, QueryResult] = {}
    results: dict[str, QueryResult] = {}
    for pair in pairs:
        if pair.sql_template not in by_template:
            template = extract_placeholders(pair.sql_template)
            resolution = rank1_resolution(
                template, runtime.store, runtime.embed_concepts
            )
            sql = render_sql(template, resolution)
            outcome = execute_sql(runtime.db, sql, runtime.limits)
            if isinstance(outcome, DbError):
                raise EvaluationError(
                    f"reference query for {pair.id} failed: {outcome.message}"
                )
            by_template[pair.sql_template] = outcome
        results[pair.id] = by_template[pair.sql_template]
    return results


def _judge_case(
    pair: QuestionSqlPair,
    config: PipelineConfig,
    runtime: PipelineRuntime,
    reference: QueryResult,
) -> CaseVerdict:
    run = answer_question(
        pair.question,
        config,
        runtime,
        exclude_groups=frozenset({pair.paraphrase_group}),
    )
    executable = run.result is not None
    infrastructure = run.failure_kind == "gateway" and not executable
    if executable:
        generated = run.query_result()
        assert generated is not None
        correct, detail = compare_answers(generated=generated, reference=reference, tolerance=config.tolerance)
    else:
        correct = False
        detail = {
            "failed_stage": run.failed_stage,
            "failure_kind": run.failure_kind,
            "failure": run.failure,
            "db_error": run.db_error,
        }
    return CaseVerdict(
        case_id=pair.id,
        run_id=run.run_id,
        executable=executable,
        correct=correct,
        infrastructure=infrastructure,
        detail=detail,
    )


def run_benchmark(
    pairs: Sequence[QuestionSqlPair],
    modes: Sequence[PipelineConfig],
    runtime: PipelineRuntime,
    *,
    verdicts_dir: str | Path | None = None,
    parallelism: int = 1,
) -> EvalReport:
    """Run every mode over every question and aggregate Acc/Exec.

    The evaluated question's paraphrase group is excluded from retrieval
    case by case. ``verdicts_dir`` gets one JSON file per case for audit.
    ``parallelism`` > 1 runs a mode's cases in a thread pool; results are
    assembled in dataset order either way.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    references = reference_results(pairs, runtime)
    mode_reports = []
    for config in modes:
        label = config.mode_label

        def judge(pair: QuestionSqlPair) -> CaseVerdict:
            return _judge_case(pair, config, runtime, references[pair.id])

        if parallelism == 1:
            verdicts = [judge(pair) for pair in pairs]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                verdicts = list(pool.map(judge, pairs))
        if verdicts_dir is not None:
            mode_dir = Path(verdicts_dir) / label
            mode_dir.mkdir(parents=True, exist_ok=True)
            for verdict in verdicts:
                path = mode_dir / f"{verdict.case_id}.json"
                path.write_text(
                    json.dumps(
                        verdict.to_dict(), indent=2, sort_keys=True, ensure_ascii=False
                    )
                    + "\n",
                    encoding="utf-8",
                )
        mode_reports.append(ModeReport.from_verdicts(label, config.to_dict(), verdicts))
    return EvalReport(modes=tuple(mode_reports), n_questions=len(pairs))


# ---------------------------------------------------------------------------
# rendering


def _pct(value: float) -> str:
    return f"{value * 100:.1f}"


def render_markdown(report: EvalReport) -> str:
    """Rows are modes, columns Acc/Exec percentages to one decimal."""
    lines = ["| Mode | Acc (%) | Exec (%) |", "| --- | --- | --- |"]
    for mode in report.modes:
        lines.append(
            f"| {mode.mode} | {_pct(mode.accuracy)} | {_pct(mode.executability)} |"
        )
    return "\n".join(lines) + "\n"


def render_csv(report: EvalReport) -> str:
    lines = ["mode,acc_pct,exec_pct"]
    for mode in report.modes:
        lines.append(f"{mode.mode},{_pct(mode.accuracy)},{_pct(mode.executability)}")
    return "\n".join(lines) + "\n"


def render_report(report: EvalReport) -> tuple[str, str]:
    """Both renderings, markdown first; they encode identical numbers."""
    return render_markdown(report), render_csv(report)
