// Wire types mirroring the instrument service JSON contracts.

export type Mode = "video" | "imaging" | "manual";

export interface NoiseConfig {
  shot_noise: boolean;
  read_noise_sigma: number;
  dark_level: number;
  ambient_level: number;
}

export interface AcqConfig {
  gate_width_ns: number;
  pulses_averaged: number;
  seed: number;
  psf_sigma_px: number;
  noise: NoiseConfig;
}

export type Rgb = [number, number, number];

export interface Status {
  mode: Mode;
  seq: number;
  phantom_id: string;
  selected_window: number;
  imaging_progress: number;
  has_stack: boolean;
  stack_dir: string | null;
  config: AcqConfig;
  overlay_legend: Record<string, Rgb>;
}

export interface FrameMeta {
  seq: number;
  kind: "intensity" | "doci";
  window: number | null;
  timestamp: number;
  mode: Mode;
}

export interface MetricsRow {
  channels: number[];
  channel_label: string;
  tn: number;
  fn: number;
  tp: number;
  fp: number;
  sensitivity: number;
  specificity: number;
  accuracy: number;
  mode: string | null;
}

export interface ClassifyResponse {
  metrics: MetricsRow;
  overlay_png_base64: string;
  legend: Record<string, number[]>;
}

export interface PixelChannel {
  value: number;
  valid: boolean;
}

export interface PixelReadout {
  x: number;
  y: number;
  channels: Record<string, PixelChannel>;
}

export interface ApiError {
  code: string;
  message: string;
}
