import { describe, expect, it } from "vitest";
import type { CloudPayload } from "../src/types.js";
import {
  PITCH_LIMIT,
  cameraBasis,
  eyeColor,
  fitView,
  frustumSegments,
  loopSegments,
  projectPoint,
  type Vec3,
  type ViewState,
} from "../src/viewer.js";

function length(v: Vec3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

const view: ViewState = { center: [0, 0, 0], yaw: 0.3, pitch: 0.4, dist: 2, focal: 300 };

describe("cameraBasis", () => {
  it("builds an orthonormal right-handed frame", () => {
    const basis = cameraBasis(view);
    expect(length(basis.right)).toBeCloseTo(1, 10);
    expect(length(basis.up)).toBeCloseTo(1, 10);
    expect(length(basis.forward)).toBeCloseTo(1, 10);
    expect(dot(basis.right, basis.up)).toBeCloseTo(0, 10);
    expect(dot(basis.right, basis.forward)).toBeCloseTo(0, 10);
    expect(dot(basis.up, basis.forward)).toBeCloseTo(0, 10);
  });

  it("looks at the orbit center from the configured distance", () => {
    const basis = cameraBasis(view);
    expect(length(basis.position)).toBeCloseTo(view.dist, 10);
    const toCenter: Vec3 = [
      view.center[0] - basis.position[0],
      view.center[1] - basis.position[1],
      view.center[2] - basis.position[2],
    ];
    expect(dot(toCenter, basis.forward)).toBeCloseTo(view.dist, 10);
  });

  it("keeps the image upright: world +z projects upward off the poles", () => {
    const basis = cameraBasis(view);
    expect(dot([0, 0, 1], basis.up)).toBeGreaterThan(0);
    expect(dot([0, 0, 1], basis.right)).toBeCloseTo(0, 10);
  });
});

describe("projectPoint", () => {
  it("puts the orbit center in the middle of the canvas", () => {
    const basis = cameraBasis(view);
    const s = projectPoint(view, basis, 640, 480, [0, 0, 0]);
    expect(s).not.toBeNull();
    expect(s!.x).toBeCloseTo(320, 6);
    expect(s!.y).toBeCloseTo(240, 6);
    expect(s!.depth).toBeCloseTo(view.dist, 10);
  });

  it("culls points behind the camera", () => {
    const basis = cameraBasis(view);
    const behind: Vec3 = [
      basis.position[0] - basis.forward[0],
      basis.position[1] - basis.forward[1],
      basis.position[2] - basis.forward[2],
    ];
    expect(projectPoint(view, basis, 640, 480, behind)).toBeNull();
  });

  it("moves a point along the camera right axis to the right of center", () => {
    const basis = cameraBasis(view);
    const p: Vec3 = [
      0.2 * basis.right[0],
      0.2 * basis.right[1],
      0.2 * basis.right[2],
    ];
    const s = projectPoint(view, basis, 640, 480, p);
    expect(s).not.toBeNull();
    expect(s!.x).toBeGreaterThan(320);
    expect(s!.y).toBeCloseTo(240, 6);
  });
});

describe("segments", () => {
  it("frustum yields four rays plus the far rectangle", () => {
    const segments = frustumSegments({
      eye: "eye1",
      apex: [0, 0, 0],
      corners: [
        [1, 1, 1],
        [1, -1, 1],
        [-1, -1, 1],
        [-1, 1, 1],
      ],
    });
    expect(segments).toHaveLength(8);
    for (let i = 0; i < 4; i++) {
      expect(segments[i][0]).toEqual([0, 0, 0]);
    }
    expect(segments[7][1]).toEqual(segments[4][0]);
  });

  it("polygon loop closes back on the first corner", () => {
    const segments = loopSegments([
      [0, 0, 0],
      [1, 0, 0],
      [1, 1, 0],
    ]);
    expect(segments).toHaveLength(3);
    expect(segments[2][1]).toEqual([0, 0, 0]);
  });
});

describe("fitView", () => {
  const cloud: CloudPayload = {
    views: [
      { eye: "eye1", points: [[-1, -1, 0], [1, 1, 0.5]] },
      { eye: "eye2", points: [[0, 0, 1]] },
    ],
    frusta: [],
    structure: [],
  };

  it("centers on the scene and keeps every point inside the canvas", () => {
    const fitted = fitView(cloud, 640, 480);
    expect(fitted.center[0]).toBeCloseTo(0, 10);
    expect(fitted.center[1]).toBeCloseTo(0, 10);
    expect(fitted.center[2]).toBeCloseTo(0.5, 10);
    expect(Math.abs(fitted.pitch)).toBeLessThan(PITCH_LIMIT);
    const basis = cameraBasis(fitted);
    for (const v of cloud.views) {
      for (const p of v.points) {
        const s = projectPoint(fitted, basis, 640, 480, p as unknown as Vec3);
        expect(s).not.toBeNull();
        expect(s!.x).toBeGreaterThanOrEqual(0);
        expect(s!.x).toBeLessThanOrEqual(640);
        expect(s!.y).toBeGreaterThanOrEqual(0);
        expect(s!.y).toBeLessThanOrEqual(480);
      }
    }
  });

  it("falls back to a sane default for an empty payload", () => {
    const fitted = fitView({ views: [], frusta: [], structure: [] }, 640, 480);
    expect(fitted.dist).toBeGreaterThan(0);
    expect(fitted.focal).toBeGreaterThan(0);
  });
});

describe("eyeColor", () => {
  it("is stable per index and wraps around the palette", () => {
    expect(eyeColor(0)).toBe(eyeColor(7));
    expect(eyeColor(1)).not.toBe(eyeColor(2));
  });
});
