import { InstrumentApi, ServerError } from "./api.js";
import { OVERLAY_LEGEND, cssColor } from "./colors.js";
import { metricsSummary, readoutText, timestampLabel } from "./format.js";
import { FramePoller } from "./poller.js";
import {
  ConsoleEvent,
  ConsoleState,
  canSteer,
  initialState,
  legend,
  reduce,
} from "./state.js";
import type { Mode } from "./types.js";
import { parseChannelList, positiveInt, positiveReal } from "./validate.js";

type LayerKey = "boundary" | "fn" | "fp" | "tp";

const api = new InstrumentApi("");
let state: ConsoleState = initialState();
let overlayImage: HTMLImageElement | null = null;
let lastFrameUrl: string | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
};

function dispatch(event: ConsoleEvent): void {
  state = reduce(state, event);
  render();
}

async function confirmed<T>(action: () => Promise<T>): Promise<T | null> {
  // one user action in flight at a time; only server-confirmed state lands
  if (state.actionPending) {
    return null;
  }
  dispatch({ type: "action-start" });
  try {
    const result = await action();
    dispatch({ type: "action-done" });
    return result;
  } catch (err) {
    if (err instanceof ServerError) {
      dispatch({ type: "server-error", message: `${err.code}: ${err.message}` });
    } else {
      dispatch({ type: "server-error", message: String(err) });
    }
    return null;
  }
}

async function refreshStatus(): Promise<void> {
  try {
    const status = await api.status();
    dispatch({ type: "status", status });
  } catch {
    dispatch({ type: "disconnected" });
  }
}

function bindModePanel(): void {
  for (const mode of ["video", "imaging", "manual"] as Mode[]) {
    $(`mode-${mode}`).addEventListener("click", async () => {
      const status = await confirmed(() => api.setMode(mode));
      if (status) {
        dispatch({ type: "status", status });
      }
    });
  }
  $("channel-select").addEventListener("change", async (ev) => {
    const window = Number((ev.target as HTMLSelectElement).value);
    const status = await confirmed(() => api.putConfig({ channel: window }));
    if (status) {
      dispatch({ type: "status", status });
    }
  });
}

function bindParameterPanel(): void {
  $("apply-config").addEventListener("click", async () => {
    const gateRaw = ($("gate-width") as HTMLInputElement).value;
    const pulsesRaw = ($("pulses") as HTMLInputElement).value;
    const seedRaw = ($("seed") as HTMLInputElement).value;
    const shot = ($("shot-noise") as HTMLInputElement).checked;

    for (const check of [positiveReal(gateRaw, "gate width"), positiveInt(pulsesRaw, "averaging")]) {
      if (!check.ok) {
        dispatch({ type: "server-error", message: check.message ?? "invalid input" });
        return;
      }
    }
    const patch = {
      gate_width_ns: Number(gateRaw),
      pulses_averaged: Number(pulsesRaw),
      seed: Number(seedRaw) || 0,
      noise: { shot_noise: shot },
    };
    const status = await confirmed(() => api.putConfig(patch));
    if (status) {
      dispatch({ type: "status", status });
    }
  });
}

function bindOverlayPanel(): void {
  $("run-classify").addEventListener("click", async () => {
    const channels = parseChannelList(($("classify-channels") as HTMLInputElement).value);
    if (!channels) {
      dispatch({ type: "server-error", message: "channels must be windows 2..10" });
      return;
    }
    const result = await confirmed(() => api.classify(channels));
    if (result) {
      dispatch({ type: "metrics", row: result.metrics });
      overlayImage = new Image();
      overlayImage.onload = render;
      overlayImage.src = `data:image/png;base64,${result.overlay_png_base64}`;
    }
  });
  for (const layer of ["boundary", "fn", "fp", "tp"] as LayerKey[]) {
    $(`toggle-${layer}`).addEventListener("change", () => {
      dispatch({ type: "toggle-overlay", layer });
    });
  }
}

function bindCursorReadout(): void {
  const frame = $("frame") as HTMLImageElement;
  let busy = false;
  frame.addEventListener("mousemove", async (ev) => {
    if (busy || !frame.naturalWidth) {
      return;
    }
    busy = true;
    const rect = frame.getBoundingClientRect();
    const x = Math.floor(((ev.clientX - rect.left) / rect.width) * frame.naturalWidth);
    const y = Math.floor(((ev.clientY - rect.top) / rect.height) * frame.naturalHeight);
    try {
      const readout = await api.pixel(x, y);
      $("readout").textContent = readoutText(readout);
    } catch {
      $("readout").textContent = "no ratio maps yet";
    } finally {
      setTimeout(() => {
        busy = false;
      }, 120);
    }
  });
}

function drawOverlay(): void {
  const canvas = $("overlay-canvas") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  if (!overlayImage || !overlayImage.complete || overlayImage.naturalWidth === 0) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  canvas.width = overlayImage.naturalWidth;
  canvas.height = overlayImage.naturalHeight;
  ctx.drawImage(overlayImage, 0, 0);
  const pal = legend(state, OVERLAY_LEGEND);
  const img = ctx.getImageData(0, 0, canvas.width, canvas.height);
  const data = img.data;
  const off: [number, number, number][] = [];
  for (const layer of ["boundary", "fn", "fp", "tp"] as LayerKey[]) {
    if (!state.overlayToggles[layer] && pal[layer]) {
      off.push(pal[layer] as [number, number, number]);
    }
  }
  for (let i = 0; i < data.length; i += 4) {
    const r = data[i], g = data[i + 1], b = data[i + 2];
    if (r === 0 && g === 0 && b === 0) {
      data[i + 3] = 0; // black background is always transparent over the heatmap
      continue;
    }
    for (const [or, og, ob] of off) {
      if (r === or && g === og && b === ob) {
        data[i + 3] = 0;
        break;
      }
    }
  }
  ctx.putImageData(img, 0, 0);
}

function render(): void {
  const status = state.status;
  $("connection").textContent = state.connected ? "connected" : "disconnected";
  $("connection").className = state.connected ? "ok" : "bad";
  $("phantom-id").textContent = status ? status.phantom_id : "-";
  $("mode-label").textContent = status ? status.mode : "-";
  $("seq-label").textContent = `seq ${state.lastSeq < 0 ? "-" : state.lastSeq}`;

  const steerable = canSteer(state);
  for (const id of ["mode-video", "mode-imaging", "mode-manual", "apply-config", "channel-select"]) {
    ($(id) as HTMLButtonElement | HTMLInputElement).disabled = !steerable;
  }
  for (const mode of ["video", "imaging", "manual"] as Mode[]) {
    $(`mode-${mode}`).classList.toggle("active", status?.mode === mode);
  }
  if (status) {
    $("imaging-progress").textContent =
      status.mode === "imaging" ? `acquiring window ${status.imaging_progress}/9` : "";
    const gate = $("gate-width") as HTMLInputElement;
    if (document.activeElement !== gate) {
      gate.value = String(status.config.gate_width_ns);
    }
    ($("channel-select") as HTMLSelectElement).value = String(status.selected_window);
  }

  const history = $("history");
  history.innerHTML = "";
  for (const entry of state.gateHistory.slice(-12)) {
    const span = document.createElement("span");
    span.textContent = `#${entry.seq} T=${entry.gate_width_ns}`;
    history.appendChild(span);
  }

  $("metrics-line").textContent = state.metrics ? metricsSummary(state.metrics) : "";
  const toast = $("toast");
  toast.textContent = state.toast ?? "";
  toast.style.display = state.toast ? "block" : "none";

  const pal = legend(state, OVERLAY_LEGEND);
  for (const layer of ["boundary", "fn", "fp", "tp"] as LayerKey[]) {
    const chip = $(`legend-${layer}`);
    if (pal[layer]) {
      chip.style.background = cssColor(pal[layer]);
    }
  }
  drawOverlay();
}

function startPolling(): void {
  const poller = new FramePoller({
    poll: (since) => api.frame(since),
    onFrame: (meta, blob) => {
      const accepted = meta.seq > state.lastSeq;
      dispatch({ type: "frame", meta });
      if (!accepted) {
        return;
      }
      const url = URL.createObjectURL(blob);
      const frame = $("frame") as HTMLImageElement;
      frame.src = url;
      if (lastFrameUrl) {
        URL.revokeObjectURL(lastFrameUrl);
      }
      lastFrameUrl = url;
      $("frame-meta").textContent =
        `#${meta.seq} ${meta.kind}` +
        (meta.window !== null ? ` w${meta.window}` : "") +
        ` at ${timestampLabel(meta.timestamp)}`;
      if (meta.mode === "imaging" && meta.window !== null) {
        const thumb = $(`thumb-${meta.window}`) as HTMLImageElement;
        thumb.src = url;
        thumb.classList.add("filled");
      }
      void refreshStatus();
    },
    onError: () => dispatch({ type: "disconnected" }),
  });
  poller.start();
}

function init(): void {
  bindModePanel();
  bindParameterPanel();
  bindOverlayPanel();
  bindCursorReadout();
  $("toast").addEventListener("click", () => dispatch({ type: "dismiss-toast" }));
  void refreshStatus();
  window.setInterval(refreshStatus, 2000);
  startPolling();
  render();
}

document.addEventListener("DOMContentLoaded", init);
