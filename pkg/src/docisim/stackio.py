"""Bit-exact raster file format and the stack archive layout.

Raster files ("DOCR"): a 16-byte header -- magic "DOCR", version u16,
width u32, height u32, dtype u8 (1 = float32, 2 = uint16, 3 = bit-packed
mask), one reserved byte -- followed by the row-major little-endian
payload.  Masks pack the flattened raster with np.packbits.

A stack archive is a directory holding manifest.json plus one raster file
per (channel, gate) pair and any extra planes (ground-truth labels, tissue
mask).  The manifest records dimensions, channel metadata, gate/pulse
configuration, seed, and a sha256 per file; the creation timestamp lives
outside the checksummed content so identical acquisitions are
byte-identical apart from that one field.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .camera import AcquisitionConfig, ChannelStack, FilterChannel, FrameTriplet, NoiseConfig
from .errors import BadMagic, ChecksumMismatch, FormatError, TruncatedPayload, UnsupportedVersion
from .lifetime import GateConfig, PumpPulse
from .phantom import Phantom

MAGIC = b"DOCR"
VERSION = 1
_HEADER = struct.Struct("<4sHIIBB")

DTYPE_FLOAT32 = 1
DTYPE_UINT16 = 2
DTYPE_MASK = 3

GATE_NAMES = ("reference", "decay", "background")


def raster_bytes(arr: np.ndarray) -> bytes:
    """Serialize a 2-D raster; dtype is inferred from the array."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise FormatError("raster must be 2-D")
    h, w = arr.shape
    if arr.dtype == np.bool_:
        code = DTYPE_MASK
        payload = np.packbits(arr.reshape(-1)).tobytes()
    elif arr.dtype == np.uint16:
        code = DTYPE_UINT16
        payload = arr.astype("<u2").tobytes()
    else:
        data = arr.astype("<f4")
        if not np.all(np.isfinite(data)):
            raise FormatError("raster values must be finite")
        code = DTYPE_FLOAT32
        payload = data.tobytes()
    return _HEADER.pack(MAGIC, VERSION, w, h, code, 0) + payload


def parse_raster(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"file shorter than the {_HEADER.size}-byte header")
    magic, version, w, h, code, _reserved = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    if w == 0 or h == 0:
        raise FormatError("zero raster dimension")
    payload = blob[_HEADER.size :]
    if code == DTYPE_MASK:
        expected = (w * h + 7) // 8
    elif code == DTYPE_UINT16:
        expected = w * h * 2
    elif code == DTYPE_FLOAT32:
        expected = w * h * 4
    else:
        raise FormatError(f"unknown dtype code {code}")
    if len(payload) < expected:
        raise TruncatedPayload(f"payload {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise FormatError(f"trailing bytes: payload {len(payload)}, expected {expected}")
    if code == DTYPE_MASK:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=w * h)
        return bits.astype(bool).reshape(h, w)
    if code == DTYPE_UINT16:
        return np.frombuffer(payload, dtype="<u2").reshape(h, w).astype(np.uint16)
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float32)


def raster_write(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(raster_bytes(arr))


def raster_read(path: str | Path) -> np.ndarray:
    return parse_raster(Path(path).read_bytes())


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _channel_meta(ch: FilterChannel) -> dict:
    return {
        "index": ch.index,
        "window": ch.window,
        "center_nm": ch.center_nm,
        "passband_nm": list(ch.passband_nm),
        "relative_yield": {str(k): v for k, v in ch.relative_yield.items()},
    }


def _channel_from_meta(meta: dict) -> FilterChannel:
    return FilterChannel(
        index=meta["index"],
        center_nm=meta["center_nm"],
        passband_nm=tuple(meta["passband_nm"]),
        relative_yield={int(k): v for k, v in meta.get("relative_yield", {}).items()},
    )


def write_stack(
    directory: str | Path,
    stack: ChannelStack,
    *,
    phantom: Phantom | None = None,
    pixel_pitch_mm: float | None = None,
    extras: Mapping[str, np.ndarray] | None = None,
) -> dict:
    """Persist a channel stack; returns the manifest.

    When a phantom is given its label map and tissue mask are stored as
    extra planes so classification and evaluation can run from the archive
    alone.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = stack.config
    shape = stack.triplets[0].reference.shape
    files: dict[str, dict] = {}

    def put(name: str, arr: np.ndarray, role: str, window: int | None = None) -> None:
        blob = raster_bytes(arr)
        (directory / name).write_bytes(blob)
        entry: dict = {"sha256": _sha256(blob), "role": role}
        if window is not None:
            entry["window"] = window
        files[name] = entry

    for ch, trip in zip(cfg.channels, stack.triplets):
        for gate_name in GATE_NAMES:
            arr = getattr(trip, gate_name).astype(np.float32)
            put(f"ch{ch.window:02d}_{gate_name}.docr", arr, role=gate_name, window=ch.window)

    pitch = pixel_pitch_mm
    if phantom is not None:
        pitch = phantom.pixel_pitch_mm
        put("label_map.docr", phantom.label_map.astype(np.uint16), role="label_map")
        put("tissue_mask.docr", phantom.tissue_mask(), role="tissue_mask")
    for name, arr in (extras or {}).items():
        put(f"{name}.docr", arr, role=name)

    manifest = {
        "format": "doci-stack",
        "version": VERSION,
        "width": shape[1],
        "height": shape[0],
        "pixel_pitch_mm": pitch,
        "phantom_id": stack.phantom_id,
        "seed": cfg.seed,
        "pulses_averaged": cfg.pulses_averaged,
        "psf_sigma_px": cfg.psf_sigma_px,
        "pulse": {
            "peak_intensity": cfg.pulse.peak_intensity,
            "pulse_width_ns": cfg.pulse.pulse_width_ns,
            "fall_start_ns": cfg.pulse.fall_start_ns,
            "fall_tau_ns": cfg.pulse.fall_tau_ns,
            "rep_rate_hz": cfg.pulse.rep_rate_hz,
        },
        "gate": {
            "width_ns": cfg.gate.width_ns,
            "reference_start_ns": cfg.gate.reference_start_ns,
            "decay_start_ns": cfg.gate.decay_start_ns,
            "background_start_ns": cfg.gate.background_start_ns,
        },
        "noise": {
            "shot_noise": cfg.noise.shot_noise,
            "read_noise_sigma": cfg.noise.read_noise_sigma,
            "dark_level": cfg.noise.dark_level,
            "ambient_level": cfg.noise.ambient_level,
        },
        "channels": [_channel_meta(ch) for ch in cfg.channels],
        "files": files,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


@dataclass(frozen=True)
class LoadedStack:
    triplets: dict  # window -> FrameTriplet
    config: AcquisitionConfig
    manifest: dict
    pixel_pitch_mm: float | None
    label_map: np.ndarray | None = None
    tissue_mask: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def windows(self) -> list[int]:
        return sorted(self.triplets)


def read_stack(directory: str | Path, *, verify: bool = True) -> LoadedStack:
    """Load an archive; with verify=True every raster is checked against its
    manifest sha256 and any mismatch raises ChecksumMismatch."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "doci-stack":
        raise FormatError("not a doci-stack manifest")
    if manifest.get("version") != VERSION:
        raise UnsupportedVersion(f"stack version {manifest.get('version')} not supported")

    rasters: dict[str, np.ndarray] = {}
    for name, entry in manifest["files"].items():
        blob = (directory / name).read_bytes()
        if verify and _sha256(blob) != entry["sha256"]:
            raise ChecksumMismatch(f"{name} does not match its manifest checksum")
        rasters[name] = parse_raster(blob)

    channels = tuple(_channel_from_meta(m) for m in manifest["channels"])
    gates: dict[int, dict[str, np.ndarray]] = {}
    extras: dict[str, np.ndarray] = {}
    for name, entry in manifest["files"].items():
        role = entry["role"]
        if role in GATE_NAMES:
            gates.setdefault(entry["window"], {})[role] = rasters[name]
        elif role not in ("label_map", "tissue_mask"):
            extras[role] = rasters[name]

    triplets = {}
    for window, parts in gates.items():
        missing = [g for g in GATE_NAMES if g not in parts]
        if missing:
            raise FormatError(f"window {window} missing gates: {missing}")
        triplets[window] = FrameTriplet(
            reference=parts["reference"].astype(float),
            decay=parts["decay"].astype(float),
            background=parts["background"].astype(float),
        )

    pulse = PumpPulse(**manifest["pulse"])
    gate = GateConfig(**manifest["gate"])
    noise = NoiseConfig(**manifest["noise"])
    config = AcquisitionConfig(
        pulse=pulse,
        gate=gate,
        channels=channels,
        pulses_averaged=manifest["pulses_averaged"],
        noise=noise,
        seed=manifest["seed"],
        psf_sigma_px=manifest.get("psf_sigma_px", 0.8),
    )
    label = rasters.get("label_map.docr")
    tissue = rasters.get("tissue_mask.docr")
    return LoadedStack(
        triplets=triplets,
        config=config,
        manifest=manifest,
        pixel_pitch_mm=manifest.get("pixel_pitch_mm"),
        label_map=label.astype(int) if label is not None else None,
        tissue_mask=tissue,
        extras=extras,
    )
