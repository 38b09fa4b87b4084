import {
  ApiErrorBody,
  Capabilities,
  CurvesPayload,
  DatasetInfo,
  QueryPayload,
  SessionConfigOverrides,
  SessionSummary,
  SubmitResult,
  Label,
} from "./types.js";

/** Error carrying the service's {code, message} body and HTTP status. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await response.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through to a generic message
  }
  return new ApiError(
    response.status,
    body?.code ?? "http-error",
    body?.message ?? `request failed with status ${response.status}`,
  );
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  async datasets(): Promise<DatasetInfo[]> {
    const body = await this.request<{ datasets: DatasetInfo[] }>("/datasets");
    return body.datasets;
  }

  capabilities(): Promise<Capabilities> {
    return this.request<Capabilities>("/capabilities");
  }

  createSession(
    dataset: string,
    strategy: string,
    config?: SessionConfigOverrides,
  ): Promise<SessionSummary> {
    return this.request<SessionSummary>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config ? { dataset, strategy, config } : { dataset, strategy }),
    });
  }

  session(id: string): Promise<SessionSummary> {
    return this.request<SessionSummary>(`/sessions/${id}`);
  }

  nextQuery(id: string): Promise<QueryPayload> {
    return this.request<QueryPayload>(`/sessions/${id}/query`);
  }

  submitLabels(id: string, bagId: string, labels: Label[]): Promise<SubmitResult> {
    return this.request<SubmitResult>(`/sessions/${id}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ bag_id: bagId, labels }),
    });
  }

  curves(id: string): Promise<CurvesPayload> {
    return this.request<CurvesPayload>(`/sessions/${id}/curves`);
  }
}
