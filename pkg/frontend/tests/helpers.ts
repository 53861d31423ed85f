import { Window } from "happy-dom";
import type {
  CalibrationJob,
  CalibrationResult,
  EyeStatus,
  StatusSnapshot,
} from "../src/types.js";

/** Detached DOM for driving components outside a browser. */
export function makeDom(): { window: Window; root: HTMLElement } {
  const window = new Window();
  const root = window.document.createElement("div") as unknown as HTMLElement;
  window.document.body.appendChild(root as never);
  return { window, root };
}

export function makeEye(id: string, overrides: Partial<EyeStatus> = {}): EyeStatus {
  return {
    id,
    expected: true,
    frames: 120,
    decode_errors: 0,
    last_index: 119,
    last_timestamp_us: 14875000,
    fps: 8.0,
    stale: false,
    last_error: "",
    ...overrides,
  };
}

export function idleJob(overrides: Partial<CalibrationJob> = {}): CalibrationJob {
  return {
    state: "idle",
    stage: "",
    source: "",
    error: "",
    started_at: null,
    duration_s: null,
    has_result: false,
    ...overrides,
  };
}

export function makeSnapshot(
  eyes: EyeStatus[],
  overrides: Partial<StatusSnapshot> = {},
): StatusSnapshot {
  return {
    broker_connected: true,
    eyes,
    frames_received: eyes.reduce((acc, eye) => acc + eye.frames, 0),
    sets: { complete: 110, incomplete: 2, queue_dropped: 0, pending: 1 },
    order_errors: {},
    unknown_frames: {},
    recording: null,
    calibration: idleJob(),
    ...overrides,
  };
}

export function makeResult(overrides: Partial<CalibrationResult> = {}): CalibrationResult {
  const eyeIds = ["eye1", "eye2", "eye3", "eye4"];
  return {
    format: "vcap-calibration",
    version: 1,
    eyes: eyeIds.map((id) => ({
      id,
      ok: true,
      flagged: false,
      correspondences: 8,
      error: "",
      pose: { rotation_wxyz: [1, 0, 0, 0], translation: [0, 0, 0] },
    })),
    mean_rmse_mm: 18.42,
    pairs: [
      { a: "eye1", b: "eye2", rmse_mm: 17.1, matches: 5100 },
      { a: "eye2", b: "eye3", rmse_mm: 18.9, matches: 6020 },
      { a: "eye3", b: "eye4", rmse_mm: 19.4, matches: 5870 },
      { a: "eye4", b: "eye1", rmse_mm: 18.3, matches: 4910 },
    ],
    ring: eyeIds,
    icp: { iterations: 6, converged: true, matches_last: 15000, rms_history: [0.02, 0.009] },
    config: {},
    ...overrides,
  };
}

export function makeCloud(eyeIds: string[] = ["eye1", "eye2", "eye3", "eye4"]) {
  return {
    views: eyeIds.map((eye, i) => ({
      eye,
      points: [
        [0.1 * i, 0, 0.2],
        [0.1 * i, 0.05, 0.25],
      ],
    })),
    frusta: eyeIds.map((eye, i) => ({
      eye,
      apex: [Math.cos(i), Math.sin(i), 0.4],
      corners: [
        [0.2, 0.2, 0.3],
        [0.2, -0.2, 0.3],
        [-0.2, -0.2, 0.3],
        [-0.2, 0.2, 0.3],
      ],
    })),
    structure: [
      [
        [0.3, 0.3, 0],
        [0.3, -0.3, 0],
        [-0.3, -0.3, 0],
        [-0.3, 0.3, 0],
      ],
    ],
  };
}

/** Poll until `probe` returns a truthy value, or fail after `timeoutMs`. */
export async function waitFor<T>(
  probe: () => T | null | undefined | false,
  timeoutMs = 5000,
  stepMs = 25,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = probe();
    if (value) {
      return value;
    }
    if (Date.now() > deadline) {
      throw new Error(`condition not met within ${timeoutMs} ms`);
    }
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
}

/** Let queued promise callbacks run. */
export async function flush(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}
