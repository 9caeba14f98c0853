import { describe, expect, it } from 'vitest';

import { ApiError, ServiceClient, type FetchLike } from '../src/api.js';
import { MockService } from './mock_service.js';

describe('ServiceClient', () => {
  it('walks a run through all four endpoints', async () => {
    const mock = new MockService();
    const client = new ServiceClient('', mock.fetch);

    const runId = await client.submitQuestion('How many patients have dysphagia?');
    expect(runId).toBe('run-1');

    let doc = await client.getRun(runId);
    expect(doc.status.phase).toBe('awaiting_code_review');
    expect(doc.trace.resolutions[0]!.candidates.length).toBeGreaterThan(0);

    const status = await client.approveCodes(runId, {});
    expect(status.phase).toBe('awaiting_sql_approval');

    const outcome = await client.execute(runId);
    expect(outcome.status.phase).toBe('answered');
    expect(outcome.answer).toContain('42');

    doc = await client.getRun(runId);
    expect(doc.trace.final_sql).toContain('(4229369)');
  });

  it('raises ApiError with status and server detail', async () => {
    const mock = new MockService();
    const client = new ServiceClient('', mock.fetch);
    await expect(client.getRun('nope')).rejects.toThrowError(ApiError);
    await expect(client.getRun('nope')).rejects.toMatchObject({ status: 404 });
    await expect(client.submitQuestion('   ')).rejects.toMatchObject({ status: 400 });
  });

  it('maps phase violations to 409 and bad codes to 422', async () => {
    const mock = new MockService();
    const client = new ServiceClient('', mock.fetch);
    const runId = await client.submitQuestion('q?');
    // still generating: execute must be refused
    await expect(client.execute(runId)).rejects.toMatchObject({ status: 409 });
    await client.getRun(runId);
    await expect(
      client.approveCodes(runId, { '[condition@dysphagia]': [999999] }),
    ).rejects.toMatchObject({ status: 422 });
    await expect(
      client.approveCodes(runId, { '[condition@dysphagia]': [] }),
    ).rejects.toMatchObject({ status: 422 });
  });

  it('sends JSON bodies, the api token header, and the base URL prefix', async () => {
    const seen: { url: string; init: RequestInit | undefined }[] = [];
    const fetchFn: FetchLike = (url, init) => {
      seen.push({ url, init });
      return Promise.resolve(
        new Response(JSON.stringify({ run_id: 'run-9' }), {
          status: 202,
          headers: { 'content-type': 'application/json' },
        }),
      );
    };
    const client = new ServiceClient('http://svc:8000', fetchFn, 'sekrit');
    await client.submitQuestion('q?', { mode: 'simple' });
    expect(seen).toHaveLength(1);
    expect(seen[0]!.url).toBe('http://svc:8000/questions');
    const init = seen[0]!.init!;
    expect(init.method).toBe('POST');
    const headers = init.headers as Record<string, string>;
    expect(headers['x-api-token']).toBe('sekrit');
    expect(headers['content-type']).toBe('application/json');
    expect(JSON.parse(init.body as string)).toEqual({
      question: 'q?',
      config: { mode: 'simple' },
    });
  });

  it('escapes run ids in paths', async () => {
    const urls: string[] = [];
    const fetchFn: FetchLike = (url) => {
      urls.push(url);
      return Promise.resolve(
        new Response(JSON.stringify({ detail: 'unknown run' }), { status: 404 }),
      );
    };
    const client = new ServiceClient('', fetchFn);
    await expect(client.getRun('a/b c')).rejects.toThrowError(ApiError);
    expect(urls[0]).toBe('/runs/a%2Fb%20c');
  });

  it('surfaces non-JSON error bodies as status lines', async () => {
    const fetchFn: FetchLike = () =>
      Promise.resolve(new Response('<html>gateway</html>', { status: 502 }));
    const client = new ServiceClient('', fetchFn);
    await expect(client.getRun('x')).rejects.toMatchObject({ status: 502 });
  });
});
