import type { FrameMeta, MetricsRow, Mode, Rgb, Status } from "./types.js";

// The console never fabricates state: mode/config/seq come only from
// server-confirmed payloads (status responses and frame metadata).  A
// frame is rendered only when its seq is strictly newer than anything
// already displayed; late long-poll responses are discarded.

export interface GateHistoryEntry {
  seq: number;
  gate_width_ns: number;
}

export interface OverlayToggles {
  boundary: boolean;
  fn: boolean;
  fp: boolean;
  tp: boolean;
}

export interface ConsoleState {
  connected: boolean;
  status: Status | null;
  lastSeq: number;
  lastFrame: FrameMeta | null;
  imagingFrames: Record<number, number>; // window -> seq of its thumbnail
  gateHistory: GateHistoryEntry[];
  actionPending: boolean;
  toast: string | null;
  metrics: MetricsRow | null;
  overlayToggles: OverlayToggles;
}

export type ConsoleEvent =
  | { type: "connected" }
  | { type: "disconnected" }
  | { type: "status"; status: Status }
  | { type: "frame"; meta: FrameMeta }
  | { type: "action-start" }
  | { type: "action-done" }
  | { type: "server-error"; message: string }
  | { type: "metrics"; row: MetricsRow }
  | { type: "toggle-overlay"; layer: keyof OverlayToggles }
  | { type: "dismiss-toast" };

export function initialState(): ConsoleState {
  return {
    connected: false,
    status: null,
    lastSeq: -1,
    lastFrame: null,
    imagingFrames: {},
    gateHistory: [],
    actionPending: false,
    toast: null,
    metrics: null,
    overlayToggles: { boundary: true, fn: true, fp: true, tp: true },
  };
}

const HISTORY_LIMIT = 40;

export function reduce(state: ConsoleState, event: ConsoleEvent): ConsoleState {
  switch (event.type) {
    case "connected":
      return { ...state, connected: true };
    case "disconnected":
      return { ...state, connected: false };
    case "status": {
      const next: ConsoleState = { ...state, connected: true, status: event.status };
      if (event.status.mode !== "imaging" && Object.keys(state.imagingFrames).length === 9) {
        // sequence complete; keep the grid until the next imaging run starts
        return next;
      }
      return next;
    }
    case "frame": {
      if (event.meta.seq <= state.lastSeq) {
        return state; // stale long-poll response: discard
      }
      const next: ConsoleState = {
        ...state,
        lastSeq: event.meta.seq,
        lastFrame: event.meta,
      };
      if (event.meta.mode === "imaging" && event.meta.window !== null) {
        next.imagingFrames = { ...state.imagingFrames, [event.meta.window]: event.meta.seq };
      } else if (event.meta.mode === "imaging") {
        next.imagingFrames = state.imagingFrames;
      } else if (Object.keys(state.imagingFrames).length > 0 && event.meta.mode === "video") {
        next.imagingFrames = {};
      }
      if (state.status) {
        const entry = { seq: event.meta.seq, gate_width_ns: state.status.config.gate_width_ns };
        next.gateHistory = [...state.gateHistory, entry].slice(-HISTORY_LIMIT);
      }
      return next;
    }
    case "action-start":
      return { ...state, actionPending: true };
    case "action-done":
      return { ...state, actionPending: false };
    case "server-error":
      return { ...state, actionPending: false, toast: event.message };
    case "metrics":
      return { ...state, metrics: event.row };
    case "toggle-overlay":
      return {
        ...state,
        overlayToggles: {
          ...state.overlayToggles,
          [event.layer]: !state.overlayToggles[event.layer],
        },
      };
    case "dismiss-toast":
      return { ...state, toast: null };
  }
}

/** Parameter and mode controls stay disabled while the server is imaging
 * (mirror of the server's 409 contract) or an action is awaiting its
 * confirmation. */
export function canSteer(state: ConsoleState): boolean {
  return !state.actionPending && state.status !== null && state.status.mode !== "imaging";
}

export function displayedMode(state: ConsoleState): Mode | null {
  return state.status ? state.status.mode : null;
}

/** Legend bytes: the server-reported palette wins over the built-in one. */
export function legend(state: ConsoleState, fallback: Record<string, Rgb>): Record<string, Rgb> {
  return state.status ? state.status.overlay_legend : fallback;
}
