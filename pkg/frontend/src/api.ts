import type { AlertRecord, ReviewStatus, StatsSnapshot } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly body?: unknown,
  ) {
    super(message);
  }
}

export type ReviewDecision = Exclude<ReviewStatus, "pending">;

/** Thin typed client over the service HTTP API; no fabricated fields. */
export class DashboardApi {
  constructor(
    readonly base: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  streamUrl(): string {
    return `${this.base}/api/stream`;
  }

  snapshotUrl(alertId: string, index: number): string {
    return `${this.base}/api/snapshots/${alertId}_${index}.jpg`;
  }

  async fetchAlerts(sinceMs?: number): Promise<AlertRecord[]> {
    const query = sinceMs !== undefined ? `?since_ms=${sinceMs}` : "";
    return this.json(`${this.base}/api/alerts${query}`);
  }

  async fetchAlert(alertId: string): Promise<AlertRecord> {
    return this.json(`${this.base}/api/alerts/${alertId}`);
  }

  async fetchStats(): Promise<{ stats: StatsSnapshot }> {
    return this.json(`${this.base}/api/stats`);
  }

  /**
   * POST a review decision. 409 means someone reviewed it first; the server
   * state in the error body wins.
   */
  async postReview(
    alertId: string,
    decision: ReviewDecision,
    note?: string,
  ): Promise<AlertRecord> {
    const resp = await this.fetchImpl(`${this.base}/api/alerts/${alertId}/review`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(note === undefined ? { decision } : { decision, note }),
    });
    const body = await resp.json().catch(() => undefined);
    if (!resp.ok) {
      throw new ApiError(resp.status, `review failed: ${resp.status}`, body);
    }
    return body as AlertRecord;
  }

  private async json<T>(url: string): Promise<T> {
    const resp = await this.fetchImpl(url);
    const body = await resp.json().catch(() => undefined);
    if (!resp.ok) {
      throw new ApiError(resp.status, `request failed: ${resp.status}`, body);
    }
    return body as T;
  }
}
