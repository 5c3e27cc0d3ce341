import type {
  MatrixView,
  MilestoneView,
  QueryResult,
  QueryStatus,
  SessionView,
  TaxonomyView,
  TraceDocument,
  TrendReport,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string }
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

/** Thin typed client over the service wire protocol. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path);
    if (!resp.ok) throw new Error(`GET ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new Error(`POST ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  submitQuery(sessionId: string, query: string): Promise<{ execution_id: string }> {
    return this.post("/queries", { session_id: sessionId, query });
  }

  status(executionId: string): Promise<QueryStatus> {
    return this.get(`/queries/${executionId}`);
  }

  result(executionId: string): Promise<QueryResult> {
    return this.get(`/queries/${executionId}/result`);
  }

  trace(executionId: string): Promise<TraceDocument> {
    return this.get(`/queries/${executionId}/trace`);
  }

  taxonomy(kind: string): Promise<TaxonomyView> {
    return this.get(`/taxonomy/${kind}`);
  }

  matrix(): Promise<MatrixView> {
    return this.get("/matrix");
  }

  trend(nodeId?: string): Promise<TrendReport> {
    const suffix = nodeId ? `?node_id=${encodeURIComponent(nodeId)}` : "";
    return this.get(`/trend${suffix}`);
  }

  milestones(topK = 3): Promise<MilestoneView> {
    return this.get(`/milestones?top_k=${topK}`);
  }

  session(sessionId: string): Promise<SessionView> {
    return this.get(`/sessions/${sessionId}`);
  }
}
