/** Drive a mock-service run to a given phase and hand back its document. */

import { ServiceClient } from '../src/api.js';
import type { Phase, RunDoc } from '../src/types.js';
import { MockService, type MockOptions } from './mock_service.js';

export async function docAtPhase(
  phase: Phase,
  options: MockOptions = {},
  overrides: Record<string, number[]> = {},
): Promise<RunDoc> {
  const polls = phase === 'generating' ? 2 : 1;
  const mock = new MockService({ pollsUntilReady: polls, ...options });
  const client = new ServiceClient('', mock.fetch);
  const runId = await client.submitQuestion('How many patients have dysphagia?');
  if (phase === 'generating') return client.getRun(runId);
  await client.getRun(runId);
  if (phase === 'awaiting_code_review' || phase === 'failed') return client.getRun(runId);
  await client.approveCodes(runId, overrides);
  if (phase === 'awaiting_sql_approval') return client.getRun(runId);
  await client.execute(runId);
  return client.getRun(runId);
}
