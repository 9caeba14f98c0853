/** Browser entry point: wire the controller to the page and re-render on
 * every state change. The run id is mirrored into the URL hash so a
 * reload re-attaches to the same run.
 */

import { ServiceClient } from './api.js';
import { AppController } from './app.js';
import { render, type ViewHandlers } from './view.js';

function runIdFromHash(): string | null {
  const match = /^#run=([A-Za-z0-9_-]+)$/.exec(window.location.hash);
  return match?.[1] ?? null;
}

function syncHash(runId: string | null): void {
  const hash = runId === null ? '' : `#run=${runId}`;
  if (window.location.hash === hash) return;
  try {
    history.replaceState(null, '', hash === '' ? window.location.pathname : hash);
  } catch {
    window.location.hash = hash;
  }
}

export function bootstrap(
  root: HTMLElement,
  client: ServiceClient = new ServiceClient(''),
): AppController {
  const controller: AppController = new AppController(client, () => {
    syncHash(controller.state.runId);
    render(root, controller.state, handlers);
  });
  const handlers: ViewHandlers = {
    submitQuestion: (question) => void controller.submitQuestion(question),
    toggleCandidate: (placeholder, conceptId) => controller.toggleCandidate(placeholder, conceptId),
    submitCodes: () => void controller.submitCodes(),
    approveExecute: () => void controller.approveExecute(),
    retry: () => void controller.retry(),
    sortBy: (column) => controller.sortBy(column),
    reset: () => controller.reset(),
  };

  const existing = runIdFromHash();
  if (existing !== null) controller.openRun(existing);
  else render(root, controller.state, handlers);
  return controller;
}

const appRoot = typeof document === 'undefined' ? null : document.getElementById('app');
if (appRoot !== null) bootstrap(appRoot);
