import type { PanelApi } from "./api.js";
import type { PanelStore, PanelState } from "./store.js";

const DEPTH_REFRESH_MS = 1000;

interface StripCard {
  root: HTMLElement;
  badge: HTMLElement;
  caption: HTMLElement;
  color: HTMLImageElement;
  depth: HTMLImageElement;
  lastDepthFetch: number;
}

/**
 * Latest colour and depth-colormap thumbnails per eye. Colour comes from
 * the WebSocket snapshot when streaming; the depth image is pulled from
 * /preview/{id} about once a second. Stale eyes keep their last frame
 * and get a badge instead of refreshes.
 */
export class PreviewStrip {
  private readonly doc: Document;
  private readonly cards = new Map<string, StripCard>();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: PanelApi,
    store: PanelStore,
  ) {
    this.doc = root.ownerDocument;
    store.subscribe((state) => this.render(state));
  }

  private render(state: PanelState): void {
    const snap = state.snapshot;
    if (snap === null) {
      return;
    }
    const seen = new Set<string>();
    for (const eye of snap.eyes) {
      seen.add(eye.id);
      const card = this.ensureCard(eye.id);
      card.badge.hidden = !eye.stale;
      card.root.classList.toggle("stale", eye.stale);
      const thumb = state.previews[eye.id];
      if (thumb !== undefined && !eye.stale) {
        card.color.src = `data:image/jpeg;base64,${thumb.jpeg_base64}`;
        card.caption.textContent = `${eye.id} frame ${thumb.frame_index}`;
      } else if (card.caption.textContent === "") {
        card.caption.textContent = eye.id;
      }
      if (!eye.stale && eye.last_index !== null) {
        void this.refreshDepth(eye.id, card, state.transport === "ws");
      }
    }
    for (const [id, card] of this.cards) {
      if (!seen.has(id)) {
        card.root.remove();
        this.cards.delete(id);
      }
    }
  }

  private ensureCard(eyeId: string): StripCard {
    let card = this.cards.get(eyeId);
    if (card !== undefined) {
      return card;
    }
    const rootEl = this.doc.createElement("figure");
    rootEl.className = "preview-card";
    rootEl.dataset.eye = eyeId;
    const badge = this.doc.createElement("span");
    badge.className = "badge badge-stale preview-badge";
    badge.textContent = "stale";
    badge.hidden = true;
    const images = this.doc.createElement("div");
    images.className = "preview-images";
    const color = this.doc.createElement("img");
    color.alt = `${eyeId} colour`;
    color.className = "preview-color";
    const depth = this.doc.createElement("img");
    depth.alt = `${eyeId} depth`;
    depth.className = "preview-depth";
    images.append(color, depth);
    const caption = this.doc.createElement("figcaption");
    caption.textContent = "";
    rootEl.append(badge, images, caption);
    this.root.append(rootEl);
    card = { root: rootEl, badge, caption, color, depth, lastDepthFetch: 0 };
    this.cards.set(eyeId, card);
    return card;
  }

  private async refreshDepth(eyeId: string, card: StripCard, haveWsColor: boolean): Promise<void> {
    const now = Date.now();
    if (now - card.lastDepthFetch < DEPTH_REFRESH_MS) {
      return;
    }
    card.lastDepthFetch = now;
    try {
      const preview = await this.api.preview(eyeId);
      card.depth.src = `data:image/jpeg;base64,${preview.depth_jpeg_base64}`;
      if (!haveWsColor) {
        card.color.src = `data:image/jpeg;base64,${preview.color_jpeg_base64}`;
        card.caption.textContent = `${eyeId} frame ${preview.frame_index}`;
      }
    } catch {
      // no frame yet, or a race with eye shutdown; keep the previous image
    }
  }
}
