/**
 * Typed client for the annotation service JSON API.
 *
 * Every error response carries {code, message, detail}; ApiError surfaces
 * those alongside the HTTP status so callers can branch on 409/410/422.
 */

export type Phase = "training" | "awaiting-labels" | "finished" | "failed";

export interface BatchItem {
  index: number;
  score: number;
  image: string; // base64 PNG
}

export interface QueryBatch {
  batch_id: string;
  items: BatchItem[];
  class_names: string[];
}

export interface HistoryPoint {
  round: number;
  n_labeled: number;
  accuracy: number;
}

export interface SessionStatus {
  session_id: string;
  phase: Phase;
  strategy: string;
  error: string | null;
  round: number | null;
  n_labeled: number;
  n_unlabeled: number;
  history: HistoryPoint[];
}

export interface LabelEntry {
  index: number;
  label: number;
}

export interface SubmitResult {
  accepted: boolean;
  n_labeled: number;
  test_accuracy: number | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<never> {
  let code = "unknown";
  let message = `request failed with status ${response.status}`;
  let detail: unknown = null;
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
    detail = body.detail ?? null;
  } catch {
    // non-JSON error body; keep the defaults
  }
  throw new ApiError(response.status, code, message, detail);
}

export class AnnotationApi {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      await parseError(response);
    }
    return (await response.json()) as T;
  }

  createSession(config: unknown): Promise<{ session_id: string }> {
    return this.request("/api/session", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  getStatus(sessionId: string): Promise<SessionStatus> {
    return this.request(`/api/session/${sessionId}/status`);
  }

  getBatch(sessionId: string): Promise<QueryBatch> {
    return this.request(`/api/session/${sessionId}/batch`);
  }

  submitLabels(
    sessionId: string,
    batchId: string,
    labels: LabelEntry[],
  ): Promise<SubmitResult> {
    return this.request(`/api/session/${sessionId}/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ batch_id: batchId, labels }),
    });
  }
}
