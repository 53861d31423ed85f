import type { PanelApi } from "./api.js";
import type { PanelStore } from "./store.js";
import type { EventSnapshot } from "./types.js";

/** The subset of the browser WebSocket interface the feed relies on. */
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface LiveFeedOptions {
  /** Injected for tests; defaults to the browser WebSocket. */
  socketFactory?: SocketFactory;
  pollIntervalMs?: number;
  /** Skip the WebSocket and poll from the start. */
  forcePoll?: boolean;
}

/**
 * Keeps the store current. An immediate fetch paints the first state,
 * then the WebSocket stream takes over; if the socket is unavailable or
 * drops, the feed degrades to polling /status so the panel keeps working
 * against a minimal API.
 */
export class LiveFeed {
  private socket: SocketLike | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private stopped = false;
  private readonly pollIntervalMs: number;
  private readonly socketFactory: SocketFactory | null;
  private readonly forcePoll: boolean;

  constructor(
    private readonly api: PanelApi,
    private readonly store: PanelStore,
    options: LiveFeedOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 1000;
    this.forcePoll = options.forcePoll ?? false;
    this.socketFactory =
      options.socketFactory ??
      (typeof WebSocket !== "undefined" ? (url) => new WebSocket(url) as SocketLike : null);
  }

  start(): void {
    this.stopped = false;
    void this.pollOnce();
    if (this.forcePoll || this.socketFactory === null) {
      this.startPolling();
    } else {
      this.openSocket();
    }
  }

  stop(): void {
    this.stopped = true;
    this.stopPolling();
    if (this.socket !== null) {
      const socket = this.socket;
      this.socket = null;
      socket.onclose = null;
      socket.onerror = null;
      socket.close();
    }
  }

  private openSocket(): void {
    let socket: SocketLike;
    try {
      socket = this.socketFactory!(this.api.eventsUrl());
    } catch {
      this.startPolling();
      return;
    }
    this.socket = socket;
    socket.onopen = () => this.stopPolling();
    socket.onmessage = (ev) => this.onEvent(ev.data);
    socket.onclose = () => this.onSocketDown();
    socket.onerror = () => this.onSocketDown();
  }

  private onEvent(data: unknown): void {
    let snapshot: EventSnapshot;
    try {
      const text = typeof data === "string" ? data : String(data);
      snapshot = JSON.parse(text) as EventSnapshot;
    } catch {
      return;
    }
    if (snapshot.type !== "status") {
      return;
    }
    // previews first so a single notification carries both
    this.store.applyPreviews(snapshot.previews ?? {});
    this.store.applyStatus(snapshot, "ws");
  }

  private onSocketDown(): void {
    this.socket = null;
    if (this.stopped) {
      return;
    }
    this.store.markDisconnected();
    this.startPolling();
  }

  private startPolling(): void {
    if (this.pollTimer !== null || this.stopped) {
      return;
    }
    this.pollTimer = setInterval(() => void this.pollOnce(), this.pollIntervalMs);
  }

  private stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private async pollOnce(): Promise<void> {
    try {
      const snapshot = await this.api.status();
      if (!this.stopped) {
        this.store.applyStatus(snapshot, this.socket !== null ? "ws" : "poll");
      }
    } catch {
      if (!this.stopped) {
        this.store.markDisconnected();
      }
    }
  }
}
