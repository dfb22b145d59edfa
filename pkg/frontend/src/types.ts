export type AlertCategory = "CONFIRMED" | "UNCERTAIN";
export type ReviewStatus = "pending" | "confirmed" | "dismissed";

export interface ClipFrameRef {
  timestamp_ms: number;
  image_ref: string | null;
  crop_rect: [number, number, number, number];
}

/** Wire shape of an alert as served by the API. */
export interface AlertRecord {
  alert_id: string;
  camera_id: string;
  track_id: number;
  created_ms: number;
  category: AlertCategory;
  confidence: number;
  description: string;
  clip_frames: ClipFrameRef[];
  clip_window_ms: [number, number];
  review: ReviewStatus;
  review_note: string | null;
}

/** AlertRecord plus client-resolved fields the cards render from. */
export interface AlertView extends AlertRecord {
  snapshotUrls: string[];
  relativeTime: string;
}

export interface StatsSnapshot {
  frames_processed: number;
  persons_tracked: number;
  triggers_fired: number;
  vlm_calls: number;
  skips: number;
  retries: number;
  alerts_by_category: Record<string, number>;
  reduction_factor: number;
  [key: string]: unknown;
}
