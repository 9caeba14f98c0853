/** DOM rendering. The page is rebuilt from `AppState` on every change;
 * all data reaches the document through `textContent`, never markup.
 */

import type { AppState } from './app.js';
import {
  diffSql,
  effectiveIds,
  formatCell,
  formatScore,
  previewSql,
  sortRows,
  type RunView,
} from './runview.js';

export interface ViewHandlers {
  submitQuestion(question: string): void;
  toggleCandidate(placeholder: string, conceptId: number): void;
  submitCodes(): void;
  approveExecute(): void;
  retry(): void;
  sortBy(column: number): void;
  reset(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = '',
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, state: AppState, handlers: ViewHandlers): void {
  const draft = root.querySelector<HTMLTextAreaElement>('#question-input')?.value ?? '';
  root.replaceChildren();

  if (state.error !== null) {
    const banner = el('div', 'error-banner');
    banner.append(el('span', 'error-text', state.error));
    const retry = el('button', 'retry', 'Retry');
    retry.id = 'retry';
    retry.addEventListener('click', () => handlers.retry());
    banner.append(retry);
    root.append(banner);
  }

  if (state.screen === 'ask') {
    root.append(renderAskForm(state, handlers, draft));
    return;
  }

  root.append(renderRunScreen(state, handlers));
}

function renderAskForm(state: AppState, handlers: ViewHandlers, draft: string): HTMLElement {
  const panel = el('section', 'panel ask-panel');
  panel.append(el('h2', '', 'Ask a question'));
  const input = el('textarea', 'question-input');
  input.id = 'question-input';
  input.rows = 3;
  input.placeholder = 'e.g. How many patients have dysphagia?';
  input.value = draft;
  panel.append(input);
  if (state.validation !== null) panel.append(el('p', 'validation', state.validation));
  const submit = el('button', 'primary', state.submitting ? 'Submitting…' : 'Submit question');
  submit.id = 'submit-question';
  submit.disabled = state.submitting;
  submit.addEventListener('click', () => handlers.submitQuestion(input.value));
  panel.append(submit);
  return panel;
}

function renderRunScreen(state: AppState, handlers: ViewHandlers): HTMLElement {
  const screen = el('section', 'run-screen');
  const view = state.view;

  const header = el('div', 'run-header');
  header.append(el('code', 'run-id', state.runId ?? ''));
  if (view !== null) {
    header.append(el('span', `phase-badge phase-${view.phase}`, view.phase));
  }
  const fresh = el('button', 'secondary', 'New question');
  fresh.id = 'new-question';
  fresh.addEventListener('click', () => handlers.reset());
  header.append(fresh);
  screen.append(header);

  if (view === null) {
    screen.append(el('p', 'loading', 'loading run…'));
    return screen;
  }

  screen.append(renderTimeline(view));
  screen.append(renderQuestionPanel(view));
  if (state.validation !== null) screen.append(el('p', 'validation', state.validation));
  if (view.phase === 'failed') screen.append(renderFailurePanel(view));
  if (view.reviews.length > 0) screen.append(renderCodeReview(state, view, handlers));
  if (view.sqlTemplate !== null && (view.canExecute || view.isTerminal)) {
    screen.append(renderSqlApproval(state, view, handlers));
  }
  if (view.phase === 'answered') screen.append(renderAnswer(state, view, handlers));
  return screen;
}

function renderTimeline(view: RunView): HTMLElement {
  const panel = el('section', 'panel timeline-panel');
  panel.append(el('h2', '', 'Phases'));
  const list = el('ol', 'timeline');
  for (const transition of view.transitions) {
    const item = el('li', `timeline-item phase-${transition.phase}`);
    item.append(el('span', 'timeline-phase', transition.phase));
    item.append(el('span', 'timeline-at', transition.at));
    if (transition.note) item.append(el('span', 'timeline-note', transition.note));
    list.append(item);
  }
  panel.append(list);
  return panel;
}

function renderQuestionPanel(view: RunView): HTMLElement {
  const panel = el('section', 'panel question-panel');
  panel.append(el('h2', '', 'Question'));
  panel.append(el('p', 'question-text', view.question));
  if (view.maskedQuestion !== null && view.maskedQuestion !== view.question) {
    panel.append(el('p', 'masked-question', view.maskedQuestion));
  }
  return panel;
}

function renderFailurePanel(view: RunView): HTMLElement {
  const panel = el('section', 'panel failure-panel');
  panel.append(el('h2', '', 'Run failed'));
  if (view.failedStage !== null) panel.append(el('p', 'failed-stage', `stage: ${view.failedStage}`));
  if (view.failure !== null) panel.append(el('p', 'failure-text', view.failure));
  if (view.dbError !== null) {
    panel.append(el('p', 'db-error', `${view.dbError.category}: ${view.dbError.message}`));
  }
  return panel;
}

function renderCodeReview(state: AppState, view: RunView, handlers: ViewHandlers): HTMLElement {
  const panel = el('section', 'panel code-review');
  panel.append(el('h2', '', 'Medical code review'));
  const editable = view.canReview && !state.posting;

  for (const review of view.reviews) {
    const block = el('div', 'placeholder-block');
    block.dataset['placeholder'] = review.placeholder;
    const head = el('div', 'placeholder-head');
    head.append(el('code', 'placeholder-name', review.placeholder));
    head.append(el('span', 'placeholder-meta', `${review.domain} · ${review.mention}`));
    if (review.fallback) {
      head.append(el('span', 'fallback-badge', 'automatic fallback (kept rank 1)'));
    }
    block.append(head);

    const decided = new Set(effectiveIds(review, view.overrides));
    const list = el('ul', 'candidates');
    for (const candidate of review.candidates) {
      const item = el('li', 'candidate');
      const label = el('label', 'candidate-label');
      const box = el('input', 'candidate-box');
      box.type = 'checkbox';
      box.dataset['placeholder'] = review.placeholder;
      box.dataset['conceptId'] = String(candidate.concept_id);
      box.checked = view.canReview
        ? (state.selections.get(review.placeholder)?.has(candidate.concept_id) ?? false)
        : decided.has(candidate.concept_id);
      box.disabled = !editable;
      box.addEventListener('change', () =>
        handlers.toggleCandidate(review.placeholder, candidate.concept_id),
      );
      label.append(box);
      label.append(el('span', 'candidate-id', String(candidate.concept_id)));
      label.append(el('span', 'candidate-name', candidate.concept_name));
      label.append(el('span', 'candidate-score', formatScore(candidate.score)));
      item.append(label);
      list.append(item);
    }
    block.append(list);
    panel.append(block);
  }

  if (view.canReview) {
    const blocked = view.reviews.some(
      (review) =>
        (state.selections.get(review.placeholder) ?? new Set(review.acceptedIds)).size === 0,
    );
    const hint = el(
      'p',
      'hint',
      'Submitting without changes accepts the automatic resolution.',
    );
    panel.append(hint);
    const submit = el('button', 'primary', state.posting ? 'Submitting…' : 'Submit codes');
    submit.id = 'submit-codes';
    submit.disabled = state.posting || blocked;
    submit.addEventListener('click', () => handlers.submitCodes());
    panel.append(submit);
  }
  return panel;
}

function renderSqlApproval(state: AppState, view: RunView, handlers: ViewHandlers): HTMLElement {
  const panel = el('section', 'panel sql-approval');
  panel.append(el('h2', '', 'SQL approval'));

  panel.append(el('h3', '', 'Template'));
  const template = el('pre', 'sql sql-template');
  for (const segment of view.sqlSegments) {
    template.append(el('span', segment.placeholder === null ? 'sql-text' : 'sql-placeholder', segment.text));
  }
  panel.append(template);

  const preview = previewSql(view);
  if (preview !== null && view.sqlTemplate !== null) {
    panel.append(el('h3', '', view.finalSql !== null ? 'Executed SQL' : 'Final SQL preview'));
    panel.append(el('pre', 'sql sql-preview', preview));

    panel.append(el('h3', '', 'Diff against template'));
    const diff = el('pre', 'diff');
    for (const line of diffSql(view.sqlTemplate, preview)) {
      const prefix = line.kind === 'same' ? '  ' : line.kind === 'removed' ? '- ' : '+ ';
      diff.append(el('div', `diff-line diff-${line.kind}`, prefix + line.text));
    }
    panel.append(diff);
  }

  if (view.canExecute) {
    const approve = el('button', 'primary', state.posting ? 'Executing…' : 'Approve & execute');
    approve.id = 'approve-execute';
    approve.disabled = state.posting;
    approve.addEventListener('click', () => handlers.approveExecute());
    panel.append(approve);
  }
  return panel;
}

function renderAnswer(state: AppState, view: RunView, handlers: ViewHandlers): HTMLElement {
  const panel = el('section', 'panel answer-panel');
  panel.append(el('h2', '', 'Answer'));
  if (view.answer !== null) panel.append(el('p', 'answer-text', view.answer));

  const table = view.result;
  if (table !== null) {
    const wrap = el('div', 'table-wrap');
    const node = el('table', 'result-table');
    const thead = el('thead');
    const headRow = el('tr');
    table.columns.forEach((column, index) => {
      const th = el('th', 'sortable');
      th.dataset['column'] = String(index);
      let caption = column;
      if (state.sort !== null && state.sort.column === index) {
        caption += state.sort.direction === 'asc' ? ' ▲' : ' ▼';
      }
      th.textContent = caption;
      th.addEventListener('click', () => handlers.sortBy(index));
      headRow.append(th);
    });
    thead.append(headRow);
    node.append(thead);

    const tbody = el('tbody');
    const rows = state.sort === null ? table.rows : sortRows(table, state.sort);
    for (const row of rows) {
      const tr = el('tr');
      for (const cell of row) tr.append(el('td', 'cell', formatCell(cell)));
      tbody.append(tr);
    }
    node.append(tbody);
    wrap.append(node);
    panel.append(wrap);

    const note = table.truncated
      ? `${table.row_count} rows (truncated)`
      : `${table.row_count} rows`;
    panel.append(el('p', 'row-count', note));
  }
  return panel;
}
