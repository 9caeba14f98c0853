/** Typed client for the run-review JSON API; every decision is an explicit POST. */

import type { RunDoc, RunStatus } from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function detailOf(response: Response): Promise<string> {
  try {
    const body: unknown = await response.json();
    if (body && typeof body === 'object' && 'detail' in body) {
      const detail = (body as { detail: unknown }).detail;
      if (typeof detail === 'string') return detail;
      return JSON.stringify(detail);
    }
  } catch {
    // fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export class ServiceClient {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly baseUrl = '',
    fetchFn?: FetchLike,
    private readonly apiToken = '',
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'content-type': 'application/json' };
    if (this.apiToken) headers['x-api-token'] = this.apiToken;
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: this.headers() };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return (await response.json()) as T;
  }

  async submitQuestion(question: string, config?: Record<string, unknown>): Promise<string> {
    const body: Record<string, unknown> = { question };
    if (config && Object.keys(config).length > 0) body.config = config;
    const doc = await this.request<{ run_id: string }>('POST', '/questions', body);
    return doc.run_id;
  }

  getRun(runId: string): Promise<RunDoc> {
    return this.request<RunDoc>('GET', `/runs/${encodeURIComponent(runId)}`);
  }

  approveCodes(runId: string, overrides: Record<string, number[]>): Promise<RunStatus> {
    return this.request<RunStatus>('POST', `/runs/${encodeURIComponent(runId)}/codes`, overrides);
  }

  execute(runId: string): Promise<{ status: RunStatus; answer: string | null }> {
    return this.request<{ status: RunStatus; answer: string | null }>(
      'POST',
      `/runs/${encodeURIComponent(runId)}/execute`,
    );
  }
}
