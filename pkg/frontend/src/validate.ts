import type { EyeParams } from "./types.js";

export interface ParamCheck {
  params?: EyeParams;
  error?: string;
}

/**
 * Turns raw form values into an eye parameter update, or an error that
 * stops the form before anything is posted. Empty fields are simply
 * omitted; at least one must be set.
 */
export function checkEyeParams(fpsRaw: string, qualityRaw: string): ParamCheck {
  const params: EyeParams = {};
  const fpsText = fpsRaw.trim();
  const qualityText = qualityRaw.trim();

  if (fpsText !== "") {
    const fps = Number(fpsText);
    if (!Number.isFinite(fps) || fps <= 0) {
      return { error: "fps must be a positive number" };
    }
    if (fps > 120) {
      return { error: "fps above 120 is not supported" };
    }
    params.fps = fps;
  }

  if (qualityText !== "") {
    const quality = Number(qualityText);
    if (!Number.isInteger(quality) || quality < 1 || quality > 100) {
      return { error: "JPEG quality must be an integer from 1 to 100" };
    }
    params.jpeg_quality = quality;
  }

  if (params.fps === undefined && params.jpeg_quality === undefined) {
    return { error: "set fps, JPEG quality, or both" };
  }
  return { params };
}
