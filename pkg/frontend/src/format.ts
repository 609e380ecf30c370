import type { MetricsRow, PixelReadout } from "./types.js";

// All numeric displays format server-provided values; nothing here does
// physics or statistics.

export function percent(fraction: number): string {
  return `${(fraction * 100).toFixed(2)}%`;
}

export function metricsSummary(row: MetricsRow): string {
  return (
    `${row.channel_label}  sens ${percent(row.sensitivity)}  ` +
    `spec ${percent(row.specificity)}  acc ${percent(row.accuracy)}`
  );
}

export function readoutLine(window: string, entry: { value: number; valid: boolean }): string {
  if (!entry.valid) {
    return `w${window}: unreliable`;
  }
  return `w${window}: ${entry.value.toFixed(4)}`;
}

export function readoutText(readout: PixelReadout): string {
  const lines = Object.entries(readout.channels).map(([w, entry]) => readoutLine(w, entry));
  return `(${readout.x}, ${readout.y})\n` + lines.join("\n");
}

export function timestampLabel(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toLocaleTimeString();
}
