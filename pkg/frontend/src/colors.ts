import type { Rgb } from "./types.js";

// Review-overlay legend. These bytes must match the service's overlay
// renderer exactly (the server also reports them in /api/status as
// overlay_legend, which takes precedence at runtime).
export const OVERLAY_LEGEND: Record<string, Rgb> = {
  boundary: [0, 255, 255], // cyan: tissue boundary
  fn: [0, 0, 255], // blue: annotated cancer missed
  fp: [255, 0, 0], // red: benign predicted cancer
  tp: [255, 0, 255], // purple: annotation/prediction overlap
};

export function cssColor(rgb: Rgb): string {
  return `rgb(${rgb[0]}, ${rgb[1]}, ${rgb[2]})`;
}
