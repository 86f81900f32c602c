import type {
  DecisionValue,
  DescriptionResult,
  FilterResult,
  MetricsPayload,
  ParseReportJson,
  StudyListing,
  StudyView,
  VerdictUpdate,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Typed client for the nodulescreen REST service.
 *
 * All responses are passed through as the server sent them. PUTs are
 * idempotent on the server, so a network-level failure (not an HTTP error)
 * is retried once with the identical request.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async raw(path: string, init: RequestInit, retryNetwork: boolean): Promise<Response> {
    const url = this.baseUrl + path;
    try {
      return await this.fetchFn(url, init);
    } catch (err) {
      if (!retryNetwork) throw err;
      return await this.fetchFn(url, init);
    }
  }

  private async request<T>(path: string, init: RequestInit = {}, retryNetwork = false): Promise<T> {
    const response = await this.raw(path, init, retryNetwork);
    if (!response.ok) {
      let code = 'error';
      let message = `http ${response.status}`;
      try {
        const body = await response.json();
        if (body && typeof body.code === 'string') code = body.code;
        if (body && typeof body.message === 'string') message = body.message;
      } catch {
        // non-JSON error body; keep the fallback
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.request('/health');
  }

  listStudies(): Promise<StudyListing> {
    return this.request('/studies');
  }

  getStudy(studyId: string): Promise<StudyView> {
    return this.request(`/studies/${encodeURIComponent(studyId)}`);
  }

  putDescription(studyId: string, text: string): Promise<DescriptionResult> {
    return this.request(
      `/studies/${encodeURIComponent(studyId)}/description`,
      { method: 'PUT', headers: { 'content-type': 'text/plain' }, body: text },
      true,
    );
  }

  runFilter(studyId: string, configLabel: string, seed: number): Promise<FilterResult> {
    const query = `config_label=${encodeURIComponent(configLabel)}&seed=${encodeURIComponent(String(seed))}`;
    return this.request(`/studies/${encodeURIComponent(studyId)}/filter?${query}`, {
      method: 'POST',
    });
  }

  putVerdict(
    studyId: string,
    candidateId: string,
    decision: DecisionValue,
    rationale: string,
  ): Promise<VerdictUpdate> {
    const path =
      `/studies/${encodeURIComponent(studyId)}/verdicts/${encodeURIComponent(candidateId)}`;
    return this.request(
      path,
      {
        method: 'PUT',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ decision, rationale }),
      },
      true,
    );
  }

  getMetrics(studyId: string): Promise<MetricsPayload> {
    return this.request(`/studies/${encodeURIComponent(studyId)}/metrics`);
  }

  parseText(text: string): Promise<ParseReportJson> {
    return this.request('/parse', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ text }),
    });
  }

  renderUrl(renderPath: string, configLabel: string, seed: number, image: number): string {
    const query =
      `config_label=${encodeURIComponent(configLabel)}&seed=${encodeURIComponent(String(seed))}` +
      `&image=${encodeURIComponent(String(image))}`;
    return `${this.baseUrl}${renderPath}?${query}`;
  }
}
