/** Screen-independent controller: owns UI state, talks to the service,
 * and polls for run updates. Rendering subscribes via `onChange`; every
 * decision the user makes leaves through an explicit POST.
 */

import type { ServiceClient } from './api.js';
import { ApiError } from './api.js';
import { Poller } from './poll.js';
import {
  buildRunView,
  nextSort,
  selectionsToPayload,
  type RunView,
  type SortState,
} from './runview.js';

export type Screen = 'ask' | 'run';

export interface AppState {
  screen: Screen;
  runId: string | null;
  view: RunView | null;
  /** question POST in flight (submit button disabled while true) */
  submitting: boolean;
  /** codes/execute POST in flight (action buttons disabled while true) */
  posting: boolean;
  /** transport or server error shown in the banner */
  error: string | null;
  /** client-side rule violation blocking a submission */
  validation: string | null;
  /** checkbox state per placeholder */
  selections: Map<string, Set<number>>;
  sort: SortState | null;
}

export class AppController {
  readonly state: AppState = {
    screen: 'ask',
    runId: null,
    view: null,
    submitting: false,
    posting: false,
    error: null,
    validation: null,
    selections: new Map(),
    sort: null,
  };

  private readonly poller: Poller;
  private seededRunId: string | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly onChange: () => void = () => {},
    pollIntervalMs = 1000,
  ) {
    this.poller = new Poller(() => this.refresh(), pollIntervalMs);
  }

  private notify(): void {
    this.onChange();
  }

  get polling(): boolean {
    return this.poller.running;
  }

  async submitQuestion(question: string, config?: Record<string, unknown>): Promise<void> {
    const trimmed = question.trim();
    if (trimmed === '') {
      this.state.validation = 'enter a question first';
      this.notify();
      return;
    }
    if (this.state.submitting) return;
    this.state.submitting = true;
    this.state.validation = null;
    this.state.error = null;
    this.notify();
    try {
      const runId = await this.client.submitQuestion(trimmed, config);
      this.openRun(runId);
    } catch (err) {
      this.state.error = describe(err);
    } finally {
      this.state.submitting = false;
      this.notify();
    }
  }

  /** Attach to an existing run (used after submit and after a reload). */
  openRun(runId: string): void {
    this.state.screen = 'run';
    this.state.runId = runId;
    this.state.view = null;
    this.state.selections = new Map();
    this.state.sort = null;
    this.seededRunId = null;
    this.poller.start();
    this.notify();
  }

  /** One poll: fetch the run, rebuild the view, manage poller lifecycle. */
  async refresh(): Promise<void> {
    const runId = this.state.runId;
    if (runId === null) return;
    try {
      const doc = await this.client.getRun(runId);
      this.state.view = buildRunView(doc);
      this.state.error = null;
      this.seedSelections();
      if (this.state.view.isTerminal) this.poller.stop();
    } catch (err) {
      this.state.error = describe(err);
    }
    this.notify();
  }

  /** Initialise checkboxes from the automatic resolution, once per run. */
  private seedSelections(): void {
    const view = this.state.view;
    if (view === null || this.seededRunId === view.runId) return;
    if (view.reviews.length === 0 && !view.canReview) return;
    const selections = new Map<string, Set<number>>();
    for (const review of view.reviews) {
      const override = view.overrides[review.placeholder];
      selections.set(review.placeholder, new Set(override ?? review.acceptedIds));
    }
    this.state.selections = selections;
    this.seededRunId = view.runId;
  }

  toggleCandidate(placeholder: string, conceptId: number): void {
    const chosen = this.state.selections.get(placeholder);
    if (chosen === undefined) return;
    if (chosen.has(conceptId)) chosen.delete(conceptId);
    else chosen.add(conceptId);
    this.state.validation = null;
    this.notify();
  }

  /** POST the reviewed codes; blocked client-side if any placeholder is empty. */
  async submitCodes(): Promise<void> {
    const view = this.state.view;
    if (view === null || !view.canReview || this.state.posting) return;
    const check = selectionsToPayload(view.reviews, this.state.selections);
    if (!check.ok) {
      this.state.validation = check.error;
      this.notify();
      return;
    }
    this.state.posting = true;
    this.state.validation = null;
    this.notify();
    try {
      await this.client.approveCodes(view.runId, check.payload);
      await this.refresh();
    } catch (err) {
      this.state.error = describe(err);
    } finally {
      this.state.posting = false;
      this.notify();
    }
  }

  /** POST the execution approval for the final SQL. */
  async approveExecute(): Promise<void> {
    const view = this.state.view;
    if (view === null || !view.canExecute || this.state.posting) return;
    this.state.posting = true;
    this.notify();
    try {
      await this.client.execute(view.runId);
      await this.refresh();
    } catch (err) {
      this.state.error = describe(err);
    } finally {
      this.state.posting = false;
      this.notify();
    }
  }

  /** Manual retry from the error banner. */
  async retry(): Promise<void> {
    this.state.error = null;
    this.notify();
    if (this.state.screen === 'run') {
      if (!this.poller.running && this.state.view?.isTerminal !== true) this.poller.start();
      await this.refresh();
    }
  }

  sortBy(column: number): void {
    this.state.sort = nextSort(this.state.sort, column);
    this.notify();
  }

  /** Back to the question form for a fresh run. */
  reset(): void {
    this.poller.stop();
    this.state.screen = 'ask';
    this.state.runId = null;
    this.state.view = null;
    this.state.error = null;
    this.state.validation = null;
    this.state.selections = new Map();
    this.state.sort = null;
    this.seededRunId = null;
    this.notify();
  }

  dispose(): void {
    this.poller.stop();
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return `service unreachable: ${err.message}`;
  return String(err);
}
