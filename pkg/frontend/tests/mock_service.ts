/** In-memory stand-in for the run-review service.
 *
 * Implements the same four endpoints and the same phase machine as the
 * real service behind a `FetchLike` function, keeps a request log, and
 * counts executions only inside the execute route — so tests can prove
 * that no SQL runs without the approval POST.
 */

import type { FetchLike } from '../src/api.js';
import type {
  Phase,
  Resolution,
  ResultTable,
  RunDoc,
  RunStatus,
  RunTrace,
} from '../src/types.js';

export interface LoggedRequest {
  method: string;
  path: string;
  body: unknown;
}

export const MOCK_PLACEHOLDER = '[condition@dysphagia]';

export const MOCK_TEMPLATE = [
  'SELECT COUNT(DISTINCT co.person_id) AS n',
  'FROM condition_occurrence co',
  `WHERE co.condition_concept_id IN ${MOCK_PLACEHOLDER}`,
].join('\n');

export function mockResolution(): Resolution {
  return {
    domain: 'condition',
    mention: 'dysphagia',
    placeholder: MOCK_PLACEHOLDER,
    accepted_ids: [4229369],
    fallback: false,
    raw_verdict: '1',
    candidates: [
      { rank: 1, concept_id: 4229369, concept_name: 'dysphagia', score: 0.981234, accepted: true },
      { rank: 2, concept_id: 4125274, concept_name: 'oropharyngeal dysphagia', score: 0.912345, accepted: false },
      { rank: 3, concept_id: 442340, concept_name: 'esophageal dysphagia', score: 0.845678, accepted: false },
    ],
  };
}

const DEFAULT_RESULT: ResultTable = {
  columns: ['n'],
  rows: [[42]],
  row_count: 1,
  truncated: false,
};

export interface MockOptions {
  /** GET polls observed before generation finishes (default 1). */
  pollsUntilReady?: number;
  /** Park the run at `failed` instead of `awaiting_code_review`. */
  failGeneration?: boolean;
  resolutions?: Resolution[];
  sqlTemplate?: string;
  result?: ResultTable;
  answer?: string;
}

interface MockRun {
  status: RunStatus;
  trace: RunTrace;
  pollsLeft: number;
}

function emptyTrace(runId: string, question: string): RunTrace {
  return {
    run_id: runId,
    question,
    config: { prompt_mode: 'rag', k: 1 },
    template_version: 'v1',
    entities: [],
    extraction_failed: false,
    masked_question: null,
    retrieval_hits: [],
    exemplars: [],
    exchanges: [],
    sql_template: null,
    repair_attempts: [],
    repairs_used: 0,
    resolutions: [],
    overrides: {},
    final_sql: null,
    result: null,
    db_error: null,
    answer: null,
    stages: ['extract_entities'],
    failed_stage: null,
    failure_kind: null,
    failure: null,
    timings: {},
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

function fail(status: number, detail: string): Response {
  return json(status, { detail });
}

export class MockService {
  readonly log: LoggedRequest[] = [];
  /** Incremented only inside the execute route. */
  executions = 0;
  /** When true every fetch rejects, as if the server were unreachable. */
  down = false;

  private readonly runs = new Map<string, MockRun>();
  private nextId = 1;
  private readonly options: Required<MockOptions>;

  constructor(options: MockOptions = {}) {
    this.options = {
      pollsUntilReady: options.pollsUntilReady ?? 1,
      failGeneration: options.failGeneration ?? false,
      resolutions: options.resolutions ?? [mockResolution()],
      sqlTemplate: options.sqlTemplate ?? MOCK_TEMPLATE,
      result: options.result ?? DEFAULT_RESULT,
      answer: options.answer ?? 'There are 42 patients with dysphagia.',
    };
  }

  readonly fetch: FetchLike = (input, init) => {
    if (this.down) return Promise.reject(new TypeError('fetch failed'));
    const method = init?.method ?? 'GET';
    const path = input.replace(/^https?:\/\/[^/]+/, '');
    const body = typeof init?.body === 'string' ? (JSON.parse(init.body) as unknown) : undefined;
    this.log.push({ method, path, body });
    return Promise.resolve(this.route(method, path, body));
  };

  /** The run document a fresh page load would fetch. */
  runDoc(runId: string): RunDoc | null {
    const run = this.runs.get(runId);
    return run === null || run === undefined
      ? null
      : structuredClone({ status: run.status, trace: run.trace });
  }

  get runIds(): string[] {
    return [...this.runs.keys()];
  }

  private route(method: string, path: string, body: unknown): Response {
    if (method === 'POST' && path === '/questions') return this.submit(body);
    const runMatch = /^\/runs\/([^/]+)$/.exec(path);
    if (method === 'GET' && runMatch) return this.getRun(runMatch[1]!);
    const codesMatch = /^\/runs\/([^/]+)\/codes$/.exec(path);
    if (method === 'POST' && codesMatch) return this.approveCodes(codesMatch[1]!, body);
    const executeMatch = /^\/runs\/([^/]+)\/execute$/.exec(path);
    if (method === 'POST' && executeMatch) return this.execute(executeMatch[1]!);
    return fail(404, `no route for ${method} ${path}`);
  }

  private setPhase(run: MockRun, phase: Phase, note?: string): void {
    run.status.phase = phase;
    const transition = note
      ? { phase, at: new Date().toISOString(), note }
      : { phase, at: new Date().toISOString() };
    run.status.transitions.push(transition);
  }

  private submit(body: unknown): Response {
    const question =
      typeof body === 'object' && body !== null && 'question' in body
        ? String((body as { question: unknown }).question)
        : '';
    if (question.trim() === '') return fail(400, 'question must not be empty');
    const runId = `run-${this.nextId++}`;
    const run: MockRun = {
      status: { run_id: runId, phase: 'generating', transitions: [] },
      trace: emptyTrace(runId, question),
      pollsLeft: this.options.pollsUntilReady,
    };
    this.setPhase(run, 'generating');
    this.runs.set(runId, run);
    return json(202, { run_id: runId });
  }

  private getRun(runId: string): Response {
    const run = this.runs.get(runId);
    if (run === undefined) return fail(404, `unknown run ${runId}`);
    if (run.status.phase === 'generating') {
      run.pollsLeft -= 1;
      if (run.pollsLeft <= 0) this.finishGeneration(run);
    }
    return json(200, structuredClone({ status: run.status, trace: run.trace }));
  }

  private finishGeneration(run: MockRun): void {
    if (this.options.failGeneration) {
      run.trace.failed_stage = 'generate_sql';
      run.trace.failure_kind = 'non-executable';
      run.trace.failure = 'SQL still failing after 3 repairs';
      run.trace.db_error = { category: 'missing-object', message: 'no such table: nowhere' };
      this.setPhase(run, 'failed', run.trace.failure);
      return;
    }
    run.trace.entities = [{ mention: 'dysphagia', domain: 'condition' }];
    run.trace.masked_question = run.trace.question.replace(/dysphagia/i, '[condition]');
    run.trace.retrieval_hits = [{ pair_id: 'pair-007', score: 0.77 }];
    run.trace.exemplars = [['How many patients have X?', 'SELECT ...']];
    run.trace.sql_template = this.options.sqlTemplate;
    run.trace.resolutions = structuredClone(this.options.resolutions);
    run.trace.stages = ['extract_entities', 'retrieve', 'generate_sql', 'resolve_codes'];
    this.setPhase(run, 'awaiting_code_review');
  }

  private approveCodes(runId: string, body: unknown): Response {
    const run = this.runs.get(runId);
    if (run === undefined) return fail(404, `unknown run ${runId}`);
    if (run.status.phase !== 'awaiting_code_review') {
      return fail(409, `run is ${run.status.phase}, not awaiting_code_review`);
    }
    // the JSON body is the placeholder → concept-id mapping itself
    const overrides =
      typeof body === 'object' && body !== null ? (body as Record<string, number[]>) : {};
    const cleaned: Record<string, number[]> = {};
    for (const [placeholder, ids] of Object.entries(overrides)) {
      const resolution = run.trace.resolutions.find((r) => r.placeholder === placeholder);
      if (resolution === undefined) return fail(422, `unknown placeholder ${placeholder}`);
      if (!Array.isArray(ids) || ids.length === 0) {
        return fail(422, `empty concept set for ${placeholder}`);
      }
      const allowed = new Set(resolution.candidates.map((c) => c.concept_id));
      for (const id of ids) {
        if (!allowed.has(id)) return fail(422, `concept ${id} is not a candidate`);
      }
      cleaned[placeholder] = [...ids].sort((a, b) => a - b);
    }
    Object.assign(run.trace.overrides, cleaned);
    this.setPhase(run, 'awaiting_sql_approval');
    return json(200, structuredClone(run.status));
  }

  private execute(runId: string): Response {
    const run = this.runs.get(runId);
    if (run === undefined) return fail(404, `unknown run ${runId}`);
    if (run.status.phase !== 'awaiting_sql_approval') {
      return fail(409, `run is ${run.status.phase}, not awaiting_sql_approval`);
    }
    this.setPhase(run, 'executing');
    this.executions += 1;
    let sql = run.trace.sql_template ?? '';
    for (const resolution of run.trace.resolutions) {
      const ids = run.trace.overrides[resolution.placeholder] ?? resolution.accepted_ids;
      const rendered = `(${[...ids].sort((a, b) => a - b).join(', ')})`;
      sql = sql.split(resolution.placeholder).join(rendered);
    }
    run.trace.final_sql = sql;
    run.trace.result = structuredClone(this.options.result);
    run.trace.answer = this.options.answer;
    run.trace.stages = [...run.trace.stages, 'render_sql', 'execute', 'verify', 'answer'];
    this.setPhase(run, 'answered');
    return json(200, { status: structuredClone(run.status), answer: run.trace.answer });
  }
}
