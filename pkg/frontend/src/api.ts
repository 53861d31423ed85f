import type {
  CalibrationReport,
  CalibrationResult,
  CloudPayload,
  EyeParams,
  EyeStatus,
  Preview,
  StatusSnapshot,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the HTTP status and the server's `detail` message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/**
 * Thin typed client for the orchestrator API. The base URL is empty when
 * the panel is served by the orchestrator itself; tests point it at a
 * spawned rig and may inject their own fetch.
 */
export class PanelApi {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly base: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  /** ws:// address of the event stream matching the HTTP base. */
  eventsUrl(): string {
    if (this.base === "") {
      const loc = globalThis.location;
      const scheme = loc.protocol === "https:" ? "wss:" : "ws:";
      return `${scheme}//${loc.host}/events`;
    }
    return this.base.replace(/^http/, "ws") + "/events";
  }

  status(): Promise<StatusSnapshot> {
    return this.get("/status");
  }

  eyes(): Promise<EyeStatus[]> {
    return this.get("/eyes");
  }

  calibration(): Promise<CalibrationReport> {
    return this.get("/calibration");
  }

  calibrationCloud(): Promise<CloudPayload> {
    return this.get("/calibration/cloud");
  }

  preview(eyeId: string): Promise<Preview> {
    return this.get(`/preview/${encodeURIComponent(eyeId)}`);
  }

  /** Target "all" broadcasts to every eye. */
  setParams(target: string, params: EyeParams): Promise<{ ok: boolean; target: string }> {
    return this.post(`/eyes/${encodeURIComponent(target)}/params`, params);
  }

  /** Runs on the latest complete set, or on a recording when given. */
  calibrate(recording?: string): Promise<CalibrationResult> {
    return this.post("/calibrate", recording ? { recording } : {});
  }

  recordStart(directory?: string): Promise<{ recording: string }> {
    return this.post("/record/start", directory ? { directory } : {});
  }

  recordStop(): Promise<{ stopped: string }> {
    return this.post("/record/stop", {});
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.base + path);
    return this.decode<T>(resp);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.decode<T>(resp);
  }

  private async decode<T>(resp: Response): Promise<T> {
    if (resp.ok) {
      return (await resp.json()) as T;
    }
    let detail = `${resp.status} ${resp.statusText}`;
    try {
      const body = (await resp.json()) as { detail?: unknown };
      if (typeof body.detail === "string") {
        detail = body.detail;
      }
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(resp.status, detail);
  }
}
