/** Pure projections from run documents to what the screen shows.
 *
 * Everything here is display shaping only — no clinical computation. The
 * run's phase decides which actions are enabled, the SQL is split into
 * text/placeholder spans exactly as reported, and result tables are
 * sorted client-side without touching the server.
 */

import type {
  Candidate,
  Cell,
  DbErrorDoc,
  Phase,
  PhaseTransition,
  Resolution,
  ResultTable,
  RunDoc,
} from './types.js';

export interface SqlSegment {
  text: string;
  /** The placeholder this span renders, or null for plain SQL text. */
  placeholder: string | null;
}

/** Split SQL into spans, marking exactly the placeholder occurrences. */
export function splitPlaceholders(sql: string, placeholders: string[]): SqlSegment[] {
  const segments: SqlSegment[] = [];
  const unique = [...new Set(placeholders)].filter((p) => p.length > 0);
  let cursor = 0;
  while (cursor < sql.length) {
    let nextAt = -1;
    let nextPlaceholder = '';
    for (const placeholder of unique) {
      const at = sql.indexOf(placeholder, cursor);
      if (at !== -1 && (nextAt === -1 || at < nextAt)) {
        nextAt = at;
        nextPlaceholder = placeholder;
      }
    }
    if (nextAt === -1) {
      segments.push({ text: sql.slice(cursor), placeholder: null });
      break;
    }
    if (nextAt > cursor) segments.push({ text: sql.slice(cursor, nextAt), placeholder: null });
    segments.push({ text: nextPlaceholder, placeholder: nextPlaceholder });
    cursor = nextAt + nextPlaceholder.length;
  }
  if (sql.length === 0) segments.push({ text: '', placeholder: null });
  return segments;
}

export interface PlaceholderReview {
  placeholder: string;
  domain: string;
  mention: string;
  fallback: boolean;
  rawVerdict: string;
  candidates: Candidate[];
  /** Concept ids the service accepted automatically. */
  acceptedIds: number[];
}

export interface RunView {
  runId: string;
  phase: Phase;
  transitions: PhaseTransition[];
  question: string;
  maskedQuestion: string | null;
  exemplars: [string, string][];
  sqlTemplate: string | null;
  sqlSegments: SqlSegment[];
  finalSql: string | null;
  reviews: PlaceholderReview[];
  overrides: Record<string, number[]>;
  result: ResultTable | null;
  dbError: DbErrorDoc | null;
  answer: string | null;
  failedStage: string | null;
  failure: string | null;
  /** Phase-gated action enablement. */
  canReview: boolean;
  canExecute: boolean;
  isTerminal: boolean;
}

export function buildRunView(doc: RunDoc): RunView {
  const { status, trace } = doc;
  const reviews: PlaceholderReview[] = trace.resolutions.map((resolution: Resolution) => ({
    placeholder: resolution.placeholder,
    domain: resolution.domain,
    mention: resolution.mention,
    fallback: resolution.fallback,
    rawVerdict: resolution.raw_verdict,
    candidates: resolution.candidates,
    acceptedIds: [...resolution.accepted_ids],
  }));
  const placeholders = reviews.map((review) => review.placeholder);
  return {
    runId: status.run_id,
    phase: status.phase,
    transitions: status.transitions,
    question: trace.question,
    maskedQuestion: trace.masked_question,
    exemplars: trace.exemplars,
    sqlTemplate: trace.sql_template,
    sqlSegments: trace.sql_template === null ? [] : splitPlaceholders(trace.sql_template, placeholders),
    finalSql: trace.final_sql,
    reviews,
    overrides: trace.overrides,
    result: trace.result,
    dbError: trace.db_error,
    answer: trace.answer,
    failedStage: trace.failed_stage,
    failure: trace.failure,
    canReview: status.phase === 'awaiting_code_review',
    canExecute: status.phase === 'awaiting_sql_approval',
    isTerminal: status.phase === 'answered' || status.phase === 'failed',
  };
}

export type PayloadCheck =
  | { ok: true; payload: Record<string, number[]> }
  | { ok: false; error: string };

/** Build the code-approval payload from checkbox selections.
 *
 * Every placeholder must keep at least one selected candidate (the
 * non-empty rule is enforced here, before any request is made). Only
 * selections that differ from the automatic resolution are sent; when
 * nothing differs the payload is empty, accepting the defaults.
 */
export function selectionsToPayload(
  reviews: PlaceholderReview[],
  selected: Map<string, Set<number>>,
): PayloadCheck {
  const payload: Record<string, number[]> = {};
  for (const review of reviews) {
    const chosen = selected.get(review.placeholder) ?? new Set(review.acceptedIds);
    if (chosen.size === 0) {
      return { ok: false, error: `${review.placeholder}: keep at least one concept selected` };
    }
    const ids = [...chosen].sort((a, b) => a - b);
    const defaults = [...review.acceptedIds].sort((a, b) => a - b);
    const differs = ids.length !== defaults.length || ids.some((id, i) => id !== defaults[i]);
    if (differs) payload[review.placeholder] = ids;
  }
  return { ok: true, payload };
}

export interface DiffLine {
  kind: 'same' | 'removed' | 'added';
  text: string;
}

/** Line diff of the placeholder template against the rendered SQL. */
export function diffSql(template: string, finalSql: string): DiffLine[] {
  const before = template.split('\n');
  const after = finalSql.split('\n');
  // longest-common-subsequence table over lines
  const lcs: number[][] = Array.from({ length: before.length + 1 }, () =>
    new Array<number>(after.length + 1).fill(0),
  );
  for (let i = before.length - 1; i >= 0; i--) {
    for (let j = after.length - 1; j >= 0; j--) {
      lcs[i]![j] =
        before[i] === after[j]
          ? lcs[i + 1]![j + 1]! + 1
          : Math.max(lcs[i + 1]![j]!, lcs[i]![j + 1]!);
    }
  }
  const lines: DiffLine[] = [];
  let i = 0;
  let j = 0;
  while (i < before.length && j < after.length) {
    if (before[i] === after[j]) {
      lines.push({ kind: 'same', text: before[i]! });
      i++;
      j++;
    } else if (lcs[i + 1]![j]! >= lcs[i]![j + 1]!) {
      lines.push({ kind: 'removed', text: before[i]! });
      i++;
    } else {
      lines.push({ kind: 'added', text: after[j]! });
      j++;
    }
  }
  for (; i < before.length; i++) lines.push({ kind: 'removed', text: before[i]! });
  for (; j < after.length; j++) lines.push({ kind: 'added', text: after[j]! });
  return lines;
}

/** Ids in effect for a placeholder: persisted override, else the automatic set. */
export function effectiveIds(review: PlaceholderReview, overrides: Record<string, number[]>): number[] {
  const chosen = overrides[review.placeholder] ?? review.acceptedIds;
  return [...chosen].sort((a, b) => a - b);
}

/** The SQL that approval would execute.
 *
 * Once the service has rendered the final SQL that text is authoritative;
 * before then the preview substitutes each placeholder with its accepted
 * ids formatted the same way the service formats them.
 */
export function previewSql(view: RunView): string | null {
  if (view.finalSql !== null) return view.finalSql;
  if (view.sqlTemplate === null) return null;
  const byPlaceholder = new Map(
    view.reviews.map((review) => [review.placeholder, effectiveIds(review, view.overrides)]),
  );
  return view.sqlSegments
    .map((segment) =>
      segment.placeholder === null
        ? segment.text
        : `(${(byPlaceholder.get(segment.placeholder) ?? []).join(', ')})`,
    )
    .join('');
}

export type SortDirection = 'asc' | 'desc';

export interface SortState {
  column: number;
  direction: SortDirection;
}

function compareCells(a: Cell, b: Cell): number {
  if (typeof a === 'number' && typeof b === 'number') return a - b;
  return String(a).localeCompare(String(b));
}

/** Stable client-side row sort; nulls pin last either way; the input table
 * is left untouched. */
export function sortRows(table: ResultTable, sort: SortState): Cell[][] {
  const indexed = table.rows.map((row, i) => ({ row, i }));
  indexed.sort((x, y) => {
    const a = x.row[sort.column] ?? null;
    const b = y.row[sort.column] ?? null;
    let oriented: number;
    if (a === null || b === null) {
      oriented = (a === null ? 1 : 0) - (b === null ? 1 : 0);
    } else {
      const cmp = compareCells(a, b);
      oriented = sort.direction === 'asc' ? cmp : -cmp;
    }
    return oriented !== 0 ? oriented : x.i - y.i;
  });
  return indexed.map((entry) => entry.row);
}

export function nextSort(current: SortState | null, column: number): SortState {
  if (current && current.column === column && current.direction === 'asc') {
    return { column, direction: 'desc' };
  }
  return { column, direction: 'asc' };
}

export function formatScore(score: number): string {
  return score.toFixed(3);
}

export function formatCell(cell: Cell): string {
  if (cell === null) return '∅';
  if (typeof cell === 'number' && !Number.isInteger(cell)) return cell.toFixed(4);
  return String(cell);
}
