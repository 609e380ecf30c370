"""Single-session instrument service over HTTP.

One simulated instrument, one steering client, any number of read-only
viewers.  All state mutations are serialized through one lock owned by the
session; acquisitions run on background threads and publish immutable
frames with strictly increasing sequence numbers.  Frame delivery is long
polling: GET /api/frame?since=N blocks until a newer frame exists or the
timeout passes (204).

Endpoints (JSON errors as {"code", "message"}):
  GET  /api/status            session summary: mode, seq, config
  PUT  /api/config            partial acquisition updates; 409 while imaging
  POST /api/mode              {"mode": video|imaging|manual}
  GET  /api/frame?since=N     PNG body + X-Frame-Meta header; 204 on timeout
  POST /api/classify          {"channels": [...]} -> metrics + overlay PNG
"""

from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import workflows
from .camera import AcquisitionConfig, ChannelStack, NoiseConfig, _acquire_channel
from .errors import DociError
from .lifetime import GateConfig
from .phantom import Phantom
from .pipeline import compute_doci, default_floor, gray_png_bytes, png_bytes, render_heatmap
from .stackio import LoadedStack, write_stack

MODES = ("video", "imaging", "manual")


@dataclass(frozen=True)
class Frame:
    seq: int
    kind: str            # intensity | doci
    window: int | None
    png: bytes
    timestamp: float
    mode: str

    def meta(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "window": self.window,
            "timestamp": self.timestamp,
            "mode": self.mode,
        }


class InstrumentSession:
    """Owns all mutable state; every mutation happens under self._lock."""

    def __init__(
        self,
        phantom: Phantom,
        config: AcquisitionConfig,
        *,
        data_dir: Path,
        frame_interval_s: float = 0.25,
    ) -> None:
        self.phantom = phantom
        self._config = config
        self.data_dir = Path(data_dir)
        self.frame_interval_s = frame_interval_s
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._mode = "video"
        self._seq = 0
        self._latest: Frame | None = None
        self._frame_counter = 0
        self._imaging_progress = 0
        self._imaging_thread: threading.Thread | None = None
        self._latest_stack: ChannelStack | None = None
        self._latest_stack_dir: Path | None = None
        self._latest_maps: dict[int, object] = {}
        self._selected_window = 2
        self._stop = threading.Event()
        self._streamer = threading.Thread(target=self._stream_loop, daemon=True)

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._streamer.start()

    def stop(self) -> None:
        self._stop.set()
        with self._cond:
            self._cond.notify_all()

    # -- snapshots ---------------------------------------------------------

    def status(self) -> dict:
        with self._lock:
            cfg = self._config
            return {
                "mode": self._mode,
                "seq": self._seq,
                "phantom_id": self.phantom.phantom_id,
                "selected_window": self._selected_window,
                "imaging_progress": self._imaging_progress,
                "has_stack": self._latest_stack is not None,
                "stack_dir": str(self._latest_stack_dir) if self._latest_stack_dir else None,
                "config": {
                    "gate_width_ns": cfg.gate.width_ns,
                    "pulses_averaged": cfg.pulses_averaged,
                    "seed": cfg.seed,
                    "psf_sigma_px": cfg.psf_sigma_px,
                    "noise": {
                        "shot_noise": cfg.noise.shot_noise,
                        "read_noise_sigma": cfg.noise.read_noise_sigma,
                        "dark_level": cfg.noise.dark_level,
                        "ambient_level": cfg.noise.ambient_level,
                    },
                },
                "overlay_legend": {k: list(v) for k, v in workflows.OVERLAY_COLORS.items()},
            }

    # -- steering ----------------------------------------------------------

    def set_mode(self, mode: str) -> dict:
        if mode not in MODES:
            raise ServiceError(400, "bad_mode", f"mode must be one of {MODES}")
        with self._lock:
            if self._mode == "imaging" and self._imaging_thread and self._imaging_thread.is_alive():
                raise ServiceError(409, "imaging_running", "wait for the imaging sequence to finish")
            self._mode = mode
            if mode == "imaging":
                self._imaging_progress = 0
                self._imaging_thread = threading.Thread(target=self._imaging_sequence, daemon=True)
                self._imaging_thread.start()
        return self.status()

    def update_config(self, body: dict) -> dict:
        with self._lock:
            if self._mode == "imaging" and self._imaging_thread and self._imaging_thread.is_alive():
                raise ServiceError(409, "imaging_running", "config changes never apply mid-sequence")
            cfg = self._config
            if "channel" in body:
                window = int(body["channel"])
                if window not in [ch.window for ch in cfg.channels]:
                    raise ServiceError(404, "unknown_channel", f"no channel at window {window}")
                self._selected_window = window
            if "gate_width_ns" in body:
                width = float(body["gate_width_ns"])
                if width <= 0:
                    raise ServiceError(400, "bad_gate_width", "gate width must be positive")
                cfg = replace(cfg, gate=GateConfig.for_pulse(cfg.pulse, width))
            if "pulses_averaged" in body:
                cfg = replace(cfg, pulses_averaged=int(body["pulses_averaged"]))
            if "seed" in body:
                cfg = replace(cfg, seed=int(body["seed"]))
            if "psf_sigma_px" in body:
                cfg = replace(cfg, psf_sigma_px=float(body["psf_sigma_px"]))
            if "noise" in body:
                nd = body["noise"]
                cfg = replace(
                    cfg,
                    noise=NoiseConfig(
                        shot_noise=nd.get("shot_noise", cfg.noise.shot_noise),
                        read_noise_sigma=nd.get("read_noise_sigma", cfg.noise.read_noise_sigma),
                        dark_level=nd.get("dark_level", cfg.noise.dark_level),
                        ambient_level=nd.get("ambient_level", cfg.noise.ambient_level),
                    ),
                )
            try:
                cfg.gate.validate(cfg.pulse)
            except ValueError as exc:
                raise ServiceError(400, "bad_config", str(exc)) from exc
            self._config = cfg
        return self.status()

    # -- frames ------------------------------------------------------------

    def wait_for_frame(self, since: int, timeout_s: float) -> Frame | None:
        deadline = time.monotonic() + timeout_s
        with self._cond:
            while not self._stop.is_set():
                if self._latest is not None and self._latest.seq > since:
                    return self._latest
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)
        return None

    def _publish(self, kind: str, window: int | None, png: bytes, mode: str) -> None:
        with self._cond:
            self._seq += 1
            self._latest = Frame(
                seq=self._seq, kind=kind, window=window, png=png, timestamp=time.time(), mode=mode
            )
            self._cond.notify_all()

    def _frame_seed(self, base_seed: int) -> tuple[int, int]:
        self._frame_counter += 1
        return (base_seed, self._frame_counter)

    def _snapshot(self) -> tuple[str, AcquisitionConfig, int]:
        with self._lock:
            return self._mode, self._config, self._selected_window

    def _stream_loop(self) -> None:
        while not self._stop.is_set():
            mode, cfg, window = self._snapshot()
            try:
                if mode == "video":
                    png = self._intensity_png(cfg)
                    self._publish("intensity", None, png, mode)
                elif mode == "manual":
                    png = self._doci_png(cfg, window)
                    self._publish("doci", window, png, mode)
            except Exception:
                pass  # a bad transient config must not kill the streamer
            time.sleep(self.frame_interval_s if self.frame_interval_s > 0 else 0.01)

    def _frame_config(self, cfg: AcquisitionConfig) -> AcquisitionConfig:
        with self._lock:
            seed_pair = self._frame_seed(cfg.seed)
        # fold the frame counter into the seed so live frames differ but stay
        # reproducible for a fixed session seed and frame index
        folded = (seed_pair[0] * 1_000_003 + seed_pair[1]) % 2**63
        return replace(cfg, seed=folded)

    def _intensity_png(self, cfg: AcquisitionConfig) -> bytes:
        frame_cfg = self._frame_config(cfg)
        channel = frame_cfg.channels[0]
        trip = _acquire_channel(self.phantom, frame_cfg, channel)
        return gray_png_bytes(trip.reference)

    def _doci_png(self, cfg: AcquisitionConfig, window: int) -> bytes:
        frame_cfg = self._frame_config(cfg)
        channel = next(ch for ch in frame_cfg.channels if ch.window == window)
        trip = _acquire_channel(self.phantom, frame_cfg, channel)
        doci = compute_doci(trip, default_floor(trip))
        with self._lock:
            self._latest_maps[window] = doci
        return png_bytes(render_heatmap(doci))

    def _imaging_sequence(self) -> None:
        _, cfg, _ = self._snapshot()
        triplets = []
        for i, channel in enumerate(cfg.channels):
            trip = _acquire_channel(self.phantom, cfg, channel)
            triplets.append(trip)
            doci = compute_doci(trip, default_floor(trip))
            self._publish("doci", channel.window, png_bytes(render_heatmap(doci)), "imaging")
            with self._lock:
                self._imaging_progress = i + 1
                self._latest_maps[channel.window] = doci
            # pace per-window frames so long-poll viewers see each one
            if self.frame_interval_s > 0:
                time.sleep(self.frame_interval_s)
        stack = ChannelStack(triplets=tuple(triplets), config=cfg, phantom_id=self.phantom.phantom_id)
        stamp = time.strftime("%Y%m%d_%H%M%S")
        out = self.data_dir / f"stack_{stamp}_{self._seq}"
        write_stack(out, stack, phantom=self.phantom)
        with self._lock:
            self._latest_stack = stack
            self._latest_stack_dir = out
            self._mode = "manual"

    def pixel_readout(self, x: int, y: int) -> dict:
        """Per-channel ratio value and validity at one pixel of the latest
        maps; the console echoes these values instead of recomputing."""
        h, w = self.phantom.label_map.shape
        if not (0 <= x < w and 0 <= y < h):
            raise ServiceError(400, "out_of_bounds", f"pixel ({x}, {y}) outside {w}x{h}")
        with self._lock:
            maps = dict(self._latest_maps)
        if not maps:
            raise ServiceError(404, "no_maps", "no ratio maps acquired yet")
        channels = {
            str(window): {
                "value": float(m.values[y, x]),
                "valid": bool(m.valid[y, x]),
            }
            for window, m in sorted(maps.items())
        }
        return {"x": x, "y": y, "channels": channels}

    # -- classification ----------------------------------------------------

    def classify(self, windows: list[int]) -> dict:
        with self._lock:
            stack = self._latest_stack
        if stack is None:
            raise ServiceError(409, "no_stack", "run an imaging sequence first")
        known = [ch.window for ch in stack.config.channels]
        for w in windows:
            if w not in known:
                raise ServiceError(404, "unknown_channel", f"no channel at window {w}")
        loaded = LoadedStack(
            triplets={ch.window: trip for ch, trip in zip(stack.config.channels, stack.triplets)},
            config=stack.config,
            manifest={},
            pixel_pitch_mm=self.phantom.pixel_pitch_mm,
            label_map=self.phantom.label_map,
            tissue_mask=self.phantom.tissue_mask(),
        )
        try:
            run = workflows.classify_stack(loaded, tuple(windows))
        except DociError as exc:
            raise ServiceError(409, exc.code, str(exc)) from exc
        return {
            "metrics": workflows.metrics_row_json(run.metrics),
            "overlay_png_base64": base64.b64encode(png_bytes(run.overlay_rgb)).decode(),
            "legend": {k: list(v) for k, v in workflows.OVERLAY_COLORS.items()},
        }


class ServiceError(Exception):
    def __init__(self, http_status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.http_status = http_status
        self.code = code


def _make_handler(session: InstrumentSession, long_poll_timeout_s: float, static_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:  # tests stay quiet
            pass

        # -- plumbing ------------------------------------------------------

        def _send_json(self, obj: dict, status: int = 200) -> None:
            body = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_error_json(self, err: ServiceError) -> None:
            self._send_json({"code": err.code, "message": str(err)}, status=err.http_status)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length))
            except json.JSONDecodeError as exc:
                raise ServiceError(400, "bad_json", str(exc)) from exc

        # -- routes --------------------------------------------------------

        def do_GET(self) -> None:
            url = urlparse(self.path)
            try:
                if url.path == "/api/status":
                    self._send_json(session.status())
                elif url.path == "/api/frame":
                    self._get_frame(url)
                elif url.path == "/api/pixel":
                    params = parse_qs(url.query)
                    try:
                        x = int(params.get("x", [""])[0])
                        y = int(params.get("y", [""])[0])
                    except ValueError as exc:
                        raise ServiceError(400, "bad_pixel", "x and y must be integers") from exc
                    self._send_json(session.pixel_readout(x, y))
                elif static_dir is not None:
                    self._serve_static(url.path)
                else:
                    self._send_json({"code": "not_found", "message": url.path}, status=404)
            except ServiceError as err:
                self._send_error_json(err)

        def do_PUT(self) -> None:
            url = urlparse(self.path)
            try:
                if url.path == "/api/config":
                    self._send_json(session.update_config(self._read_body()))
                else:
                    self._send_json({"code": "not_found", "message": url.path}, status=404)
            except ServiceError as err:
                self._send_error_json(err)

        def do_POST(self) -> None:
            url = urlparse(self.path)
            try:
                if url.path == "/api/mode":
                    body = self._read_body()
                    self._send_json(session.set_mode(body.get("mode", "")))
                elif url.path == "/api/classify":
                    body = self._read_body()
                    windows = [int(w) for w in body.get("channels", [])]
                    if not windows:
                        raise ServiceError(400, "bad_channels", "channels list required")
                    self._send_json(session.classify(windows))
                else:
                    self._send_json({"code": "not_found", "message": url.path}, status=404)
            except ServiceError as err:
                self._send_error_json(err)

        def _get_frame(self, url) -> None:
            params = parse_qs(url.query)
            since = int(params.get("since", ["-1"])[0])
            timeout = float(params.get("timeout", [long_poll_timeout_s])[0])
            timeout = min(timeout, long_poll_timeout_s)
            frame = session.wait_for_frame(since, timeout)
            if frame is None:
                self.send_response(204)
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            self.send_response(200)
            self.send_header("Content-Type", "image/png")
            self.send_header("Content-Length", str(len(frame.png)))
            self.send_header("X-Frame-Meta", json.dumps(frame.meta()))
            self.end_headers()
            self.wfile.write(frame.png)

        def _serve_static(self, path: str) -> None:
            rel = path.lstrip("/") or "index.html"
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                self._send_json({"code": "not_found", "message": path}, status=404)
                return
            content = target.read_bytes()
            ctype = {
                ".html": "text/html",
                ".js": "text/javascript",
                ".css": "text/css",
                ".png": "image/png",
                ".svg": "image/svg+xml",
            }.get(target.suffix, "application/octet-stream")
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(content)))
            self.end_headers()
            self.wfile.write(content)

    return Handler


class InstrumentService:
    """HTTP server wrapper; bind with port=0 for an ephemeral port."""

    def __init__(
        self,
        phantom: Phantom,
        config: AcquisitionConfig,
        *,
        data_dir: str | Path = ".",
        host: str = "127.0.0.1",
        port: int = 8765,
        long_poll_timeout_s: float = 30.0,
        frame_interval_s: float = 0.25,
        static_dir: str | Path | None = None,
    ) -> None:
        self.session = InstrumentSession(
            phantom, config, data_dir=Path(data_dir), frame_interval_s=frame_interval_s
        )
        handler = _make_handler(
            self.session, long_poll_timeout_s, Path(static_dir) if static_dir else None
        )
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> None:
        self.session.start()
        self._thread.start()

    def wait(self) -> None:
        self._thread.join()

    def stop(self) -> None:
        self.session.stop()
        self._httpd.shutdown()
        self._httpd.server_close()
