/** Small display helpers shared by the panel sections. */

export function fmtFps(fps: number): string {
  return fps.toFixed(1);
}

export function fmtMm(mm: number): string {
  return Number.isFinite(mm) ? mm.toFixed(2) : "n/a";
}

export function fmtDuration(seconds: number | null): string {
  if (seconds === null || !Number.isFinite(seconds)) {
    return "";
  }
  return seconds < 10 ? `${seconds.toFixed(2)} s` : `${seconds.toFixed(1)} s`;
}

export function fmtCount(n: number): string {
  return n.toLocaleString("en-US");
}
