import { ApiError, DashboardApi, type ReviewDecision } from "./api.js";
import { SseStream } from "./sse.js";
import type { AlertRecord, AlertView, StatsSnapshot } from "./types.js";

export type FeedListener = () => void;

function isAlertRecord(data: unknown): data is AlertRecord {
  const a = data as AlertRecord;
  return (
    !!a &&
    typeof a.alert_id === "string" &&
    (a.category === "CONFIRMED" || a.category === "UNCERTAIN")
  );
}

export function relativeTime(createdMs: number, nowMs: number): string {
  const delta = Math.max(0, nowMs - createdMs);
  if (delta < 10_000) return "just now";
  if (delta < 60_000) return `${Math.floor(delta / 1000)}s ago`;
  if (delta < 3_600_000) return `${Math.floor(delta / 60_000)}m ago`;
  return `${Math.floor(delta / 3_600_000)}h ago`;
}

/**
 * Live alert feed.
 *
 * State is fed exclusively from the server (initial fetch, SSE events,
 * review responses); the store never fabricates verdict fields. The server
 * stream is authoritative: optimistic review updates are reconciled against
 * the POST response and incoming alert-reviewed events. On reconnect the
 * missed window is refetched with since_ms and deduplicated by alert_id.
 */
export class AlertFeedStore {
  private readonly alerts = new Map<string, AlertRecord>();
  private readonly inFlightReviews = new Set<string>();
  private readonly listeners = new Set<FeedListener>();
  private stream: SseStream | null = null;
  private lastCreatedMs = 0;

  stale = false;
  stats: StatsSnapshot | null = null;

  constructor(
    readonly api: DashboardApi,
    private readonly now: () => number = Date.now,
  ) {}

  onChange(listener: FeedListener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  list(): AlertView[] {
    const now = this.now();
    return [...this.alerts.values()]
      .sort((a, b) => b.created_ms - a.created_ms || a.alert_id.localeCompare(b.alert_id))
      .map((a) => this.view(a, now));
  }

  get(alertId: string): AlertView | undefined {
    const record = this.alerts.get(alertId);
    return record && this.view(record, this.now());
  }

  get size(): number {
    return this.alerts.size;
  }

  private view(record: AlertRecord, nowMs: number): AlertView {
    return {
      ...record,
      snapshotUrls: record.clip_frames.map((_, i) =>
        this.api.snapshotUrl(record.alert_id, i),
      ),
      relativeTime: relativeTime(record.created_ms, nowMs),
    };
  }

  upsert(record: AlertRecord): void {
    if (!isAlertRecord(record)) return; // only CONFIRMED/UNCERTAIN ever render
    this.alerts.set(record.alert_id, record);
    if (record.created_ms > this.lastCreatedMs) this.lastCreatedMs = record.created_ms;
    this.emit();
  }

  remove(alertId: string): void {
    if (this.alerts.delete(alertId)) this.emit();
  }

  /** Initial load plus gap recovery after reconnects. */
  async refresh(): Promise<void> {
    const since = this.lastCreatedMs > 0 ? this.lastCreatedMs : undefined;
    const records = await this.api.fetchAlerts(since);
    for (const record of records) {
      if (isAlertRecord(record)) {
        this.alerts.set(record.alert_id, record);
        if (record.created_ms > this.lastCreatedMs) this.lastCreatedMs = record.created_ms;
      }
    }
    if (records.length) this.emit();
  }

  /** Subscribe to the live stream; renders new alerts without any reload. */
  connect(retryMs = 1000): SseStream {
    this.stream = new SseStream(
      this.api.streamUrl(),
      {
        onEvent: (name, data) => this.applyStreamEvent(name, data),
        onOpen: () => {
          this.stale = false;
          // recover anything emitted while we were away
          void this.refresh().catch(() => undefined);
          this.emit();
        },
        onStale: () => {
          this.stale = true;
          this.emit();
        },
      },
      { retryMs },
    ).start();
    return this.stream;
  }

  disconnect(): void {
    this.stream?.close();
    this.stream = null;
  }

  applyStreamEvent(name: string, data: unknown): void {
    switch (name) {
      case "alert-created":
      case "alert-reviewed":
        if (isAlertRecord(data)) this.upsert(data);
        break;
      case "stats-tick":
        this.stats = data as StatsSnapshot;
        this.emit();
        break;
    }
  }

  /**
   * Review an alert: optimistic local update, server response reconciles.
   * Idempotent at the client: one in-flight review per alert, and alerts
   * already past "pending" are not re-submitted.
   */
  async review(
    alertId: string,
    decision: ReviewDecision,
    note?: string,
  ): Promise<AlertRecord | null> {
    const current = this.alerts.get(alertId);
    if (!current || current.review !== "pending") return null;
    if (this.inFlightReviews.has(alertId)) return null;
    this.inFlightReviews.add(alertId);
    this.upsert({ ...current, review: decision, review_note: note ?? null });
    try {
      const updated = await this.api.postReview(alertId, decision, note);
      this.upsert(updated);
      return updated;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.remove(alertId); // gone on the server: drop the card
        return null;
      }
      if (err instanceof ApiError && err.status === 409 && isAlertRecord(err.body)) {
        this.upsert(err.body); // already reviewed elsewhere: server wins
        return err.body;
      }
      this.upsert(current); // roll back the optimistic update
      throw err;
    } finally {
      this.inFlightReviews.delete(alertId);
    }
  }
}
