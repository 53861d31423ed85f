import type { PanelStore, PanelState } from "./store.js";
import type { EyeStatus } from "./types.js";
import { fmtCount, fmtFps } from "./format.js";

/**
 * Per-eye status cards plus a one-line rig summary. Renders purely from
 * the store snapshot, so a reload shows the same thing the stream does.
 */
export class EyeDashboard {
  private readonly doc: Document;
  private readonly summary: HTMLElement;
  private readonly grid: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    store: PanelStore,
  ) {
    this.doc = root.ownerDocument;
    this.summary = this.doc.createElement("div");
    this.summary.className = "rig-summary";
    this.grid = this.doc.createElement("div");
    this.grid.className = "eye-grid";
    root.append(this.summary, this.grid);
    this.renderDisconnected();
    store.subscribe((state) => this.render(state));
  }

  private render(state: PanelState): void {
    if (state.snapshot === null) {
      this.renderDisconnected();
      return;
    }
    const snap = state.snapshot;
    const transport = state.connected ? state.transport : "offline";
    this.summary.textContent =
      `broker ${snap.broker_connected ? "up" : "down"} | ` +
      `${fmtCount(snap.frames_received)} frames | ` +
      `sets ${fmtCount(snap.sets.complete)} complete / ${fmtCount(snap.sets.incomplete)} incomplete | ` +
      `recording ${snap.recording ?? "off"} | ${transport}`;

    this.grid.replaceChildren();
    if (snap.eyes.length === 0) {
      const empty = this.doc.createElement("div");
      empty.className = "empty-state";
      empty.textContent = "No eyes registered. Start eye services against this broker to see them here.";
      this.grid.append(empty);
      return;
    }
    for (const eye of snap.eyes) {
      this.grid.append(this.card(eye));
    }
  }

  private renderDisconnected(): void {
    this.summary.textContent = "waiting for the orchestrator";
    this.grid.replaceChildren();
    const empty = this.doc.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "No status received yet.";
    this.grid.append(empty);
  }

  private card(eye: EyeStatus): HTMLElement {
    const card = this.doc.createElement("div");
    card.className = eye.stale ? "eye-card stale" : "eye-card live";
    card.dataset.eye = eye.id;

    const head = this.doc.createElement("div");
    head.className = "eye-head";
    const name = this.doc.createElement("span");
    name.className = "eye-name";
    name.textContent = eye.id;
    const badge = this.doc.createElement("span");
    badge.className = eye.stale ? "badge badge-stale" : "badge badge-live";
    badge.textContent = eye.stale ? "stale" : "live";
    head.append(name, badge);

    const body = this.doc.createElement("dl");
    body.className = "eye-stats";
    this.stat(body, "fps", fmtFps(eye.fps));
    this.stat(body, "frame", eye.last_index === null ? "-" : String(eye.last_index));
    this.stat(body, "received", fmtCount(eye.frames));
    this.stat(body, "decode errors", String(eye.decode_errors));

    card.append(head, body);
    if (!eye.expected) {
      const note = this.doc.createElement("div");
      note.className = "eye-note";
      note.textContent = "not in the expected rig";
      card.append(note);
    }
    if (eye.last_error !== "") {
      const err = this.doc.createElement("div");
      err.className = "eye-error";
      err.textContent = eye.last_error;
      card.append(err);
    }
    return card;
  }

  private stat(list: HTMLElement, label: string, value: string): void {
    const dt = this.doc.createElement("dt");
    dt.textContent = label;
    const dd = this.doc.createElement("dd");
    dd.textContent = value;
    list.append(dt, dd);
  }
}
