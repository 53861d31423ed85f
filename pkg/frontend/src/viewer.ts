import type { CloudPayload, Frustum } from "./types.js";

export type Vec3 = readonly [number, number, number];

/** Orbit camera: spherical position around a target, perspective projection. */
export interface ViewState {
  center: Vec3;
  /** Azimuth of the camera around world +z, radians. */
  yaw: number;
  /** Elevation above the horizontal plane, radians, clamped short of the poles. */
  pitch: number;
  dist: number;
  /** Pixels per unit of lateral offset at unit depth. */
  focal: number;
}

export const PITCH_LIMIT = 1.48;
const NEAR = 0.05;

export const PALETTE = ["#4fc3f7", "#ffb74d", "#81c784", "#e57373", "#ba68c8", "#fff176", "#90a4ae"];

export function eyeColor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function normalize(a: Vec3): Vec3 {
  const n = Math.hypot(a[0], a[1], a[2]) || 1;
  return [a[0] / n, a[1] / n, a[2] / n];
}

export interface CameraBasis {
  position: Vec3;
  right: Vec3;
  up: Vec3;
  forward: Vec3;
}

/** Right-handed look-at basis with world +z as the up reference. */
export function cameraBasis(view: ViewState): CameraBasis {
  const cp = Math.cos(view.pitch);
  const direction: Vec3 = [cp * Math.cos(view.yaw), cp * Math.sin(view.yaw), Math.sin(view.pitch)];
  const position: Vec3 = [
    view.center[0] + view.dist * direction[0],
    view.center[1] + view.dist * direction[1],
    view.center[2] + view.dist * direction[2],
  ];
  const forward = normalize([-direction[0], -direction[1], -direction[2]]);
  const right = normalize(cross(forward, [0, 0, 1]));
  const up = cross(right, forward);
  return { position, right, up, forward };
}

/** Canvas coordinates of a world point, or null when behind the camera. */
export function projectPoint(
  view: ViewState,
  basis: CameraBasis,
  width: number,
  height: number,
  p: Vec3,
): { x: number; y: number; depth: number } | null {
  const t = sub(p, basis.position);
  const depth = dot(t, basis.forward);
  if (depth <= NEAR) {
    return null;
  }
  const x = width / 2 + (view.focal * dot(t, basis.right)) / depth;
  const y = height / 2 - (view.focal * dot(t, basis.up)) / depth;
  return { x, y, depth };
}

/** Four apex-to-corner edges plus the far rectangle of one camera frustum. */
export function frustumSegments(frustum: Frustum): [Vec3, Vec3][] {
  const apex = frustum.apex as unknown as Vec3;
  const corners = frustum.corners as unknown as Vec3[];
  const segments: [Vec3, Vec3][] = [];
  for (const corner of corners) {
    segments.push([apex, corner]);
  }
  for (let i = 0; i < corners.length; i++) {
    segments.push([corners[i], corners[(i + 1) % corners.length]]);
  }
  return segments;
}

/** Consecutive edges of a closed polygon loop. */
export function loopSegments(loop: number[][]): [Vec3, Vec3][] {
  const corners = loop as unknown as Vec3[];
  const segments: [Vec3, Vec3][] = [];
  for (let i = 0; i < corners.length; i++) {
    segments.push([corners[i], corners[(i + 1) % corners.length]]);
  }
  return segments;
}

function scenePoints(cloud: CloudPayload): Vec3[] {
  const out: Vec3[] = [];
  for (const view of cloud.views) {
    for (const p of view.points) {
      out.push(p as unknown as Vec3);
    }
  }
  for (const frustum of cloud.frusta) {
    out.push(frustum.apex as unknown as Vec3);
  }
  for (const loop of cloud.structure) {
    for (const p of loop) {
      out.push(p as unknown as Vec3);
    }
  }
  return out;
}

/** Initial orbit placement: whole scene in frame, slightly from above. */
export function fitView(cloud: CloudPayload, width: number, height: number): ViewState {
  const points = scenePoints(cloud);
  if (points.length === 0) {
    return { center: [0, 0, 0], yaw: -0.7, pitch: 0.45, dist: 3, focal: width / 2 };
  }
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (const p of points) {
    for (let k = 0; k < 3; k++) {
      lo[k] = Math.min(lo[k], p[k]);
      hi[k] = Math.max(hi[k], p[k]);
    }
  }
  const center: Vec3 = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
  let radius = 0.1;
  for (const p of points) {
    radius = Math.max(radius, Math.hypot(p[0] - center[0], p[1] - center[1], p[2] - center[2]));
  }
  const dist = radius * 2.4;
  const focal = (0.42 * Math.min(width, height) * dist) / radius;
  return { center, yaw: -0.7, pitch: 0.45, dist, focal };
}

/**
 * Rotatable registered-cloud display on a plain 2D canvas: per-eye point
 * colours, camera frusta at the recovered poses and the structure
 * wireframe. Dragging orbits, the wheel zooms. Everything is redrawn from
 * scratch per frame; the decimated clouds are small enough for that.
 */
export class CloudViewer {
  view: ViewState | null = null;
  scene: CloudPayload | null = null;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {
    canvas.addEventListener("pointerdown", (ev) => {
      this.dragging = true;
      this.lastX = ev.clientX;
      this.lastY = ev.clientY;
      canvas.setPointerCapture?.(ev.pointerId);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (!this.dragging || this.view === null) {
        return;
      }
      this.view.yaw -= (ev.clientX - this.lastX) * 0.008;
      this.view.pitch = Math.min(
        PITCH_LIMIT,
        Math.max(-PITCH_LIMIT, this.view.pitch + (ev.clientY - this.lastY) * 0.008),
      );
      this.lastX = ev.clientX;
      this.lastY = ev.clientY;
      this.draw();
    });
    const release = () => {
      this.dragging = false;
    };
    canvas.addEventListener("pointerup", release);
    canvas.addEventListener("pointerleave", release);
    canvas.addEventListener("wheel", (ev) => {
      if (this.view === null) {
        return;
      }
      ev.preventDefault();
      this.view.dist *= Math.exp(ev.deltaY * 0.001);
      this.draw();
    });
  }

  setScene(scene: CloudPayload): void {
    this.scene = scene;
    this.view = fitView(scene, this.canvas.width, this.canvas.height);
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null || this.scene === null || this.view === null) {
      return;
    }
    const { width, height } = this.canvas;
    const view = this.view;
    const basis = cameraBasis(view);
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, width, height);

    ctx.strokeStyle = "#3a4352";
    ctx.lineWidth = 1;
    for (const loop of this.scene.structure) {
      this.strokeSegments(ctx, basis, loopSegments(loop), width, height);
    }

    this.scene.views.forEach((cloudView, i) => {
      ctx.fillStyle = eyeColor(i);
      for (const p of cloudView.points) {
        const s = projectPoint(view, basis, width, height, p as unknown as Vec3);
        if (s !== null) {
          ctx.fillRect(s.x - 1, s.y - 1, 2, 2);
        }
      }
    });

    ctx.lineWidth = 1.5;
    ctx.font = "12px sans-serif";
    this.scene.frusta.forEach((frustum, i) => {
      ctx.strokeStyle = eyeColor(i);
      ctx.fillStyle = eyeColor(i);
      this.strokeSegments(ctx, basis, frustumSegments(frustum), width, height);
      const apex = projectPoint(view, basis, width, height, frustum.apex as unknown as Vec3);
      if (apex !== null) {
        ctx.fillText(frustum.eye, apex.x + 6, apex.y - 6);
      }
    });
  }

  private strokeSegments(
    ctx: CanvasRenderingContext2D,
    basis: CameraBasis,
    segments: [Vec3, Vec3][],
    width: number,
    height: number,
  ): void {
    ctx.beginPath();
    for (const [a, b] of segments) {
      const pa = projectPoint(this.view!, basis, width, height, a);
      const pb = projectPoint(this.view!, basis, width, height, b);
      if (pa !== null && pb !== null) {
        ctx.moveTo(pa.x, pa.y);
        ctx.lineTo(pb.x, pb.y);
      }
    }
    ctx.stroke();
  }
}
