import type { FetchLike } from '../src/api.js';
import type { CandidateCard, MetricsPayload, ParseReportJson, StudyView } from '../src/types.js';

/** Minimal Response stand-in so tests do not depend on runtime globals. */
export function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => JSON.parse(JSON.stringify(body)),
  } as unknown as Response;
}

export function nonJsonResponse(status: number): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => {
      throw new SyntaxError('not json');
    },
  } as unknown as Response;
}

export interface RecordedCall {
  url: string;
  method: string;
  body: string | null;
}

/** Wraps a handler into a FetchLike that logs every call. */
export function recordingFetch(
  handler: (url: string, init: RequestInit) => Response | Promise<Response>,
): { calls: RecordedCall[]; fn: FetchLike } {
  const calls: RecordedCall[] = [];
  const fn: FetchLike = async (url, init = {}) => {
    calls.push({
      url,
      method: init.method ?? 'GET',
      body: typeof init.body === 'string' ? init.body : null,
    });
    return handler(url, init);
  };
  return { calls, fn };
}

export function card(overrides: Partial<CandidateCard> = {}): CandidateCard {
  return {
    id: 'cand-1',
    centroid: [10, 12, 5],
    confidence: 0.5,
    location: { laterality: 'left', lobe: 'upper' },
    verdict: null,
    prefilter: 'match',
    render_url: '/studies/study-a/candidates/cand-1/render',
    ...overrides,
  };
}

export function studyView(cards: CandidateCard[], description: string | null = null): StudyView {
  return {
    study_id: 'study-a',
    dims: [64, 64, 48],
    spacing: [1, 1, 1],
    description,
    has_truth: true,
    candidates: cards,
    decision_log_length: 0,
  };
}

export function parseReport(descriptors: ParseReportJson['descriptors']): ParseReportJson {
  return { descriptors, unrecognized_spans: [], normalized_text: '' };
}

/** Metrics whose rates deliberately contradict their own counts; a client
 * that recomputed anything would display different numbers. */
export function inconsistentMetrics(): MetricsPayload {
  return {
    fdr: 0.9,
    fp_per_scan: 123.456,
    sensitivity: 0.1,
    specificity: 0.1,
    f1: 0.05,
    reject_rate: 0.77,
    dice3d_mean: null,
    degenerate: ['specificity'],
    counts: { tp: 100, fp: 0, fn: 0, tn: 50, n_scans: 1, n_sample: 150, n_reject: 0 },
  };
}
