import type { StatusSnapshot } from "./types.js";

export type Transport = "none" | "ws" | "poll";

export interface PanelState {
  connected: boolean;
  transport: Transport;
  snapshot: StatusSnapshot | null;
  /** Latest WebSocket colour thumbnails, keyed by eye id. */
  previews: Record<string, { frame_index: number; jpeg_base64: string }>;
  /** Monotonic count of applied updates, handy for change detection. */
  revision: number;
}

export type Listener = (state: PanelState) => void;

/**
 * Single state funnel for the page. WebSocket messages and poll responses
 * both land here, and every section of the UI re-renders from the same
 * snapshot, so the two transports are interchangeable.
 */
export class PanelStore {
  private state: PanelState = {
    connected: false,
    transport: "none",
    snapshot: null,
    previews: {},
    revision: 0,
  };
  private listeners = new Set<Listener>();

  getState(): PanelState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    if (this.state.snapshot !== null) {
      listener(this.state);
    }
    return () => this.listeners.delete(listener);
  }

  applyStatus(snapshot: StatusSnapshot, transport: Transport): void {
    this.state = {
      ...this.state,
      connected: true,
      transport,
      snapshot,
      revision: this.state.revision + 1,
    };
    this.notify();
  }

  applyPreviews(previews: PanelState["previews"]): void {
    this.state = {
      ...this.state,
      previews: { ...this.state.previews, ...previews },
    };
    // previews piggyback on a status update; no separate notify
  }

  markDisconnected(): void {
    if (!this.state.connected && this.state.transport === "none") {
      return;
    }
    this.state = { ...this.state, connected: false, transport: "none" };
    this.notify();
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }
}
