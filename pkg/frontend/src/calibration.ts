import { ApiError, type PanelApi } from "./api.js";
import type { PanelStore, PanelState } from "./store.js";
import type { CalibrationJob, CalibrationResult } from "./types.js";
import { fmtDuration, fmtMm } from "./format.js";
import { CloudViewer } from "./viewer.js";

/**
 * Calibration and capture controls: start/stop recording, trigger a
 * calibration run, and inspect the outcome as a per-pair RMSE table,
 * per-eye diagnostics and a rotatable registered-cloud view with one
 * frustum per recovered pose. Everything shown is refetched from the
 * API, so a reload lands on the same picture.
 */
export class CalibrationPanel {
  readonly viewer: CloudViewer;
  /** In-flight calibration kicked off from the button, if any. */
  pending: Promise<void> | null = null;

  private readonly doc: Document;
  private readonly calibrateBtn: HTMLButtonElement;
  private readonly recordBtn: HTMLButtonElement;
  private readonly pathInput: HTMLInputElement;
  private readonly jobLine: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly resultBox: HTMLElement;
  private recording: string | null = null;

  constructor(
    root: HTMLElement,
    private readonly api: PanelApi,
    store: PanelStore,
  ) {
    this.doc = root.ownerDocument;

    const controls = this.doc.createElement("div");
    controls.className = "calib-controls";
    this.calibrateBtn = this.doc.createElement("button");
    this.calibrateBtn.textContent = "Calibrate";
    this.calibrateBtn.dataset.role = "calibrate";
    this.recordBtn = this.doc.createElement("button");
    this.recordBtn.textContent = "Start recording";
    this.recordBtn.dataset.role = "record";
    const pathLabel = this.doc.createElement("label");
    pathLabel.textContent = "recording path ";
    this.pathInput = this.doc.createElement("input");
    this.pathInput.type = "text";
    this.pathInput.size = 24;
    this.pathInput.placeholder = "blank = live frames";
    pathLabel.append(this.pathInput);
    controls.append(this.calibrateBtn, this.recordBtn, pathLabel);

    this.jobLine = this.doc.createElement("div");
    this.jobLine.className = "job-line";
    this.banner = this.doc.createElement("div");
    this.banner.className = "banner";
    this.banner.hidden = true;
    this.banner.dataset.role = "banner";
    this.resultBox = this.doc.createElement("div");
    this.resultBox.className = "calib-result";

    const canvas = this.doc.createElement("canvas");
    canvas.width = 720;
    canvas.height = 440;
    canvas.className = "cloud-canvas";
    this.viewer = new CloudViewer(canvas);

    root.append(controls, this.jobLine, this.banner, this.resultBox, canvas);

    this.calibrateBtn.addEventListener("click", () => {
      if (this.pending === null) {
        this.pending = this.runCalibration().finally(() => {
          this.pending = null;
        });
      }
    });
    this.recordBtn.addEventListener("click", () => void this.toggleRecording());
    store.subscribe((state) => this.onState(state));
    void this.restore();
  }

  /** Rebuild the result display from the API alone (initial load). */
  private async restore(): Promise<void> {
    try {
      const report = await this.api.calibration();
      this.renderJob(report.job);
      if (report.result !== null) {
        this.renderResult(report.result);
        await this.loadCloud();
      }
    } catch {
      // orchestrator not reachable yet; the store will say so
    }
  }

  private async runCalibration(): Promise<void> {
    this.calibrateBtn.disabled = true;
    this.clearBanner();
    const recording = this.pathInput.value.trim();
    try {
      const result = await this.api.calibrate(recording === "" ? undefined : recording);
      this.renderResult(result);
      await this.loadCloud();
    } catch (err) {
      const detail = err instanceof Error ? err.message : String(err);
      this.showBanner([`calibration failed: ${detail}`]);
      // the job record may carry per-stage context the error string lacks
      try {
        const report = await this.api.calibration();
        this.renderJob(report.job);
      } catch {
        // keep the banner we already have
      }
    } finally {
      this.calibrateBtn.disabled = false;
    }
  }

  private async toggleRecording(): Promise<void> {
    this.recordBtn.disabled = true;
    try {
      if (this.recording === null) {
        const dir = this.pathInput.value.trim();
        const started = await this.api.recordStart(dir === "" ? undefined : dir);
        this.recording = started.recording;
      } else {
        await this.api.recordStop();
        this.recording = null;
      }
      this.clearBanner();
    } catch (err) {
      this.showBanner([err instanceof Error ? err.message : String(err)]);
    } finally {
      this.recordBtn.disabled = false;
      this.recordBtn.textContent = this.recording === null ? "Start recording" : "Stop recording";
    }
  }

  private onState(state: PanelState): void {
    const snap = state.snapshot;
    if (snap === null) {
      return;
    }
    this.renderJob(snap.calibration);
    this.recording = snap.recording;
    this.recordBtn.textContent = this.recording === null ? "Start recording" : "Stop recording";
    if (snap.calibration.state === "running" && this.pending === null) {
      // run started elsewhere (CLI or another client); do not double-fire
      this.calibrateBtn.disabled = true;
    } else if (this.pending === null) {
      this.calibrateBtn.disabled = false;
    }
  }

  private renderJob(job: CalibrationJob): void {
    const bits = [`calibration ${job.state}`];
    if (job.stage !== "") {
      bits.push(job.stage);
    }
    if (job.source !== "") {
      bits.push(`source ${job.source}`);
    }
    const duration = fmtDuration(job.duration_s);
    if (duration !== "") {
      bits.push(duration);
    }
    this.jobLine.textContent = bits.join(" | ");
    if (job.state === "failed" && job.error !== "") {
      this.showBanner([`calibration failed: ${job.error}`]);
    }
  }

  private renderResult(result: CalibrationResult): void {
    this.resultBox.replaceChildren();

    const headline = this.doc.createElement("div");
    headline.className = "calib-headline";
    const icp = result.icp;
    headline.textContent =
      `mean RMSE ${fmtMm(result.mean_rmse_mm)} mm over ${result.pairs.length} adjacent pairs | ` +
      `ICP ${icp.iterations} iterations, ${icp.converged ? "converged" : "stopped at its floor"}`;
    this.resultBox.append(headline);

    const table = this.doc.createElement("table");
    table.dataset.role = "pairs-table";
    const head = this.doc.createElement("tr");
    for (const title of ["pair", "rmse (mm)", "matches"]) {
      const th = this.doc.createElement("th");
      th.textContent = title;
      head.append(th);
    }
    table.append(head);
    for (const pair of result.pairs) {
      table.append(this.row(`${pair.a} - ${pair.b}`, fmtMm(pair.rmse_mm), String(pair.matches)));
    }
    const mean = this.row("mean", fmtMm(result.mean_rmse_mm), "");
    mean.className = "mean-row";
    table.append(mean);
    this.resultBox.append(table);

    const eyesTable = this.doc.createElement("table");
    eyesTable.dataset.role = "eyes-table";
    const eyesHead = this.doc.createElement("tr");
    for (const title of ["eye", "state", "correspondences", "error"]) {
      const th = this.doc.createElement("th");
      th.textContent = title;
      eyesHead.append(th);
    }
    eyesTable.append(eyesHead);
    const problems: string[] = [];
    for (const eye of result.eyes) {
      const state = eye.ok ? (eye.flagged ? "flagged" : "ok") : "failed";
      eyesTable.append(this.row(eye.id, state, String(eye.correspondences), eye.error));
      if (!eye.ok) {
        problems.push(`${eye.id}: ${eye.error || "no pose recovered"}`);
      } else if (eye.flagged) {
        problems.push(`${eye.id}: labeling flagged this view as unreliable`);
      }
    }
    this.resultBox.append(eyesTable);
    if (problems.length > 0) {
      this.showBanner(["calibration completed with problems:", ...problems]);
    }
  }

  private async loadCloud(): Promise<void> {
    try {
      const cloud = await this.api.calibrationCloud();
      this.viewer.setScene(cloud);
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 404)) {
        this.showBanner([`cloud view unavailable: ${err instanceof Error ? err.message : err}`]);
      }
    }
  }

  private row(...cells: string[]): HTMLTableRowElement {
    const tr = this.doc.createElement("tr");
    for (const cell of cells) {
      const td = this.doc.createElement("td");
      td.textContent = cell;
      tr.append(td);
    }
    return tr;
  }

  private showBanner(lines: string[]): void {
    this.banner.replaceChildren();
    for (const line of lines) {
      const div = this.doc.createElement("div");
      div.textContent = line;
      this.banner.append(div);
    }
    this.banner.hidden = false;
  }

  private clearBanner(): void {
    this.banner.hidden = true;
    this.banner.replaceChildren();
  }
}
