/** Wire types for the run-review service: statuses, traces, and results. */

export const PHASE_ORDER = [
  'generating',
  'awaiting_code_review',
  'awaiting_sql_approval',
  'executing',
  'answered',
  'failed',
] as const;

export type Phase = (typeof PHASE_ORDER)[number];

export interface PhaseTransition {
  phase: Phase;
  at: string;
  note?: string;
}

export interface RunStatus {
  run_id: string;
  phase: Phase;
  transitions: PhaseTransition[];
}

export interface EntityMention {
  mention: string;
  domain: string;
}

export interface RetrievalHit {
  pair_id: string;
  score: number | null;
}

export interface Candidate {
  rank: number;
  concept_id: number;
  concept_name: string;
  score: number;
  accepted: boolean;
}

export interface Resolution {
  domain: string;
  mention: string;
  placeholder: string;
  accepted_ids: number[];
  fallback: boolean;
  raw_verdict: string;
  candidates: Candidate[];
}

export type Cell = string | number | boolean | null;

export interface ResultTable {
  columns: string[];
  rows: Cell[][];
  row_count: number;
  truncated: boolean;
}

export interface DbErrorDoc {
  category: string;
  message: string;
}

export interface RepairAttempt {
  sql: string;
  error_category: string;
  error_message: string;
}

export interface RunTrace {
  run_id: string;
  question: string;
  config: Record<string, unknown>;
  template_version: string;
  entities: EntityMention[];
  extraction_failed: boolean;
  masked_question: string | null;
  retrieval_hits: RetrievalHit[];
  exemplars: [string, string][];
  exchanges: { stage: string; prompt: string; completion: string }[];
  sql_template: string | null;
  repair_attempts: RepairAttempt[];
  repairs_used: number;
  resolutions: Resolution[];
  overrides: Record<string, number[]>;
  final_sql: string | null;
  result: ResultTable | null;
  db_error: DbErrorDoc | null;
  answer: string | null;
  stages: string[];
  failed_stage: string | null;
  failure_kind: string | null;
  failure: string | null;
  timings: Record<string, number>;
}

export interface RunDoc {
  status: RunStatus;
  trace: RunTrace;
}
