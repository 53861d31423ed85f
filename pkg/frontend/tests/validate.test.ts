import { describe, expect, it } from "vitest";
import { checkEyeParams } from "../src/validate.js";

describe("checkEyeParams", () => {
  it("accepts fps alone", () => {
    const check = checkEyeParams("8", "");
    expect(check.error).toBeUndefined();
    expect(check.params).toEqual({ fps: 8 });
  });

  it("accepts quality alone", () => {
    const check = checkEyeParams("", "70");
    expect(check.error).toBeUndefined();
    expect(check.params).toEqual({ jpeg_quality: 70 });
  });

  it("accepts both together and fractional fps", () => {
    const check = checkEyeParams("2.5", "90");
    expect(check.error).toBeUndefined();
    expect(check.params).toEqual({ fps: 2.5, jpeg_quality: 90 });
  });

  it("rejects an empty form", () => {
    const check = checkEyeParams("", "");
    expect(check.params).toBeUndefined();
    expect(check.error).toContain("set fps");
  });

  it("rejects non-positive and non-numeric fps", () => {
    for (const raw of ["0", "-1", "abc", "-Infinity"]) {
      const check = checkEyeParams(raw, "");
      expect(check.error, `fps=${raw}`).toContain("positive");
    }
  });

  it("rejects fps far beyond what an eye can stream", () => {
    const check = checkEyeParams("500", "");
    expect(check.error).toContain("120");
  });

  it("rejects quality outside 1..100 or fractional", () => {
    for (const raw of ["0", "101", "62.5", "high"]) {
      const check = checkEyeParams("", raw);
      expect(check.error, `quality=${raw}`).toContain("1 to 100");
    }
  });

  it("tolerates surrounding whitespace", () => {
    const check = checkEyeParams(" 4 ", " 55 ");
    expect(check.error).toBeUndefined();
    expect(check.params).toEqual({ fps: 4, jpeg_quality: 55 });
  });
});
