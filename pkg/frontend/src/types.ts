/** JSON shapes served by the orchestrator HTTP and WebSocket API. */

export interface EyeStatus {
  id: string;
  expected: boolean;
  frames: number;
  decode_errors: number;
  last_index: number | null;
  last_timestamp_us: number | null;
  fps: number;
  stale: boolean;
  last_error: string;
}

export interface SetCounters {
  complete: number;
  incomplete: number;
  queue_dropped: number;
  pending: number;
}

export interface CalibrationJob {
  state: "idle" | "running" | "done" | "failed";
  stage: string;
  source: string;
  error: string;
  started_at: number | null;
  duration_s: number | null;
  has_result: boolean;
}

export interface StatusSnapshot {
  broker_connected: boolean;
  eyes: EyeStatus[];
  frames_received: number;
  sets: SetCounters;
  order_errors: Record<string, number>;
  unknown_frames: Record<string, number>;
  recording: string | null;
  calibration: CalibrationJob;
}

/** WebSocket /events payload: a status snapshot plus small colour thumbnails. */
export interface EventSnapshot extends StatusSnapshot {
  type: "status";
  previews: Record<string, { frame_index: number; jpeg_base64: string }>;
}

export interface EyePose {
  rotation_wxyz: number[];
  translation: number[];
}

export interface EyeCalibration {
  id: string;
  ok: boolean;
  flagged: boolean;
  correspondences: number;
  error: string;
  pose: EyePose | null;
}

export interface PairRmse {
  a: string;
  b: string;
  rmse_mm: number;
  matches: number;
}

export interface CalibrationResult {
  format: string;
  version: number;
  eyes: EyeCalibration[];
  mean_rmse_mm: number;
  pairs: PairRmse[];
  ring: string[];
  icp: {
    iterations: number;
    converged: boolean;
    matches_last: number;
    rms_history: number[];
  };
  config: Record<string, unknown>;
}

export interface CalibrationReport {
  job: CalibrationJob;
  result: CalibrationResult | null;
}

export interface CloudView {
  eye: string;
  points: number[][];
}

export interface Frustum {
  eye: string;
  apex: number[];
  corners: number[][];
}

/** Registered clouds, camera frusta and structure wireframe for the viewer. */
export interface CloudPayload {
  views: CloudView[];
  frusta: Frustum[];
  structure: number[][][];
}

export interface Preview {
  eye_id: string;
  frame_index: number;
  timestamp_us: number;
  color_jpeg_base64: string;
  depth_jpeg_base64: string;
}

export interface EyeParams {
  fps?: number;
  jpeg_quality?: number;
}
