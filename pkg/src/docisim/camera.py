"""Simulated gated camera: expected counts, optics blur, and noise.

For every filter channel the camera measures three gated rasters over the
phantom: reference (pump plateau), decay (right after the pump falls) and
background (dark level only).  Expected counts come straight from the
exact gated-emission integrals, scaled per pixel by amplitude,
illumination and the channel's per-class emission yield.  A Gaussian PSF
blurs the noiseless rasters before noise is drawn.

Shot noise is one Poisson draw of the summed counts over all averaged
pulses, divided back by the pulse count; the distribution is identical to
summing per-pulse draws.  Read noise is Gaussian per gate read, averaged
the same way.  The random stream is split per channel from (seed, channel
index), so serial and parallel acquisition produce identical stacks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ShapeMismatch
from .lifetime import GateConfig, PumpPulse, gated_emission
from .phantom import Phantom

BANDPASS_CENTERS_NM = (415.0, 434.0, 465.0, 494.0, 520.0, 542.0, 572.0, 605.0)
_BANDPASS_HALFWIDTHS = (12.0, 12.0, 14.0, 14.0, 14.0, 14.0, 14.0, 8.0)


@dataclass(frozen=True)
class FilterChannel:
    """One filter-wheel position treated as an opaque feature dimension.

    Ordinal `index` runs 1..9; the corresponding wheel window is index + 1
    (window 1 is the blank locating window, window 2 the long-pass proxy,
    windows 3..10 the bandpass set).  `relative_yield` multiplies the
    emission amplitude per tissue class.
    """

    index: int
    center_nm: float | None
    passband_nm: tuple[float, float]
    relative_yield: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= self.index <= 9:
            raise ValueError(f"channel index must be 1..9, got {self.index}")
        low, high = self.passband_nm
        if not low < high:
            raise ValueError("passband low must be below high")

    @property
    def window(self) -> int:
        return self.index + 1

    def yield_for(self, labels: np.ndarray) -> np.ndarray:
        """Per-pixel emission-yield multiplier from the label raster."""
        if not self.relative_yield:
            return np.ones_like(labels, dtype=float)
        max_label = int(labels.max())
        table = np.ones(max_label + 1)
        for label, mult in self.relative_yield.items():
            if label <= max_label:
                table[label] = mult
        return table[labels]


def default_channels(yield_table: Mapping[int, Sequence[float]] | None = None) -> tuple[FilterChannel, ...]:
    """The nine-channel set: a long-pass proxy plus eight bandpass filters.

    `yield_table` maps a class label to its nine per-channel yields.
    """
    channels = []
    for i in range(1, 10):
        if i == 1:
            center, band = None, (405.0, 700.0)
        else:
            center = BANDPASS_CENTERS_NM[i - 2]
            hw = _BANDPASS_HALFWIDTHS[i - 2]
            band = (center - hw, center + hw)
        yields = {}
        if yield_table:
            yields = {label: float(per_ch[i - 1]) for label, per_ch in yield_table.items()}
        channels.append(FilterChannel(index=i, center_nm=center, passband_nm=band, relative_yield=yields))
    return tuple(channels)


@dataclass(frozen=True)
class NoiseConfig:
    shot_noise: bool = True
    read_noise_sigma: float = 0.0
    dark_level: float = 0.0
    ambient_level: float = 0.0

    def __post_init__(self) -> None:
        for name in ("read_noise_sigma", "dark_level", "ambient_level"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def enabled(self) -> bool:
        return self.shot_noise or self.read_noise_sigma > 0


@dataclass(frozen=True)
class AcquisitionConfig:
    pulse: PumpPulse
    gate: GateConfig
    channels: tuple[FilterChannel, ...]
    pulses_averaged: int = 250_000
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    psf_sigma_px: float = 0.8

    def __post_init__(self) -> None:
        if self.pulses_averaged < 1:
            raise ValueError("pulses_averaged must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.psf_sigma_px < 0:
            raise ValueError("psf_sigma_px must be nonnegative")
        object.__setattr__(self, "channels", tuple(self.channels))


@dataclass(frozen=True)
class FrameTriplet:
    """Reference / decay / background rasters for one channel."""

    reference: np.ndarray
    decay: np.ndarray
    background: np.ndarray

    def __post_init__(self) -> None:
        ref = np.ascontiguousarray(np.asarray(self.reference, dtype=float))
        dec = np.ascontiguousarray(np.asarray(self.decay, dtype=float))
        bg = np.ascontiguousarray(np.asarray(self.background, dtype=float))
        if not (ref.shape == dec.shape == bg.shape) or ref.ndim != 2:
            raise ShapeMismatch("triplet rasters must be 2-D with identical shapes")
        for arr in (ref, dec, bg):
            if not np.all(np.isfinite(arr)):
                raise ValueError("triplet rasters must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "decay", dec)
        object.__setattr__(self, "background", bg)


@dataclass(frozen=True)
class ChannelStack:
    """One acquisition: a FrameTriplet per configured channel."""

    triplets: tuple[FrameTriplet, ...]
    config: AcquisitionConfig
    phantom_id: str

    def __post_init__(self) -> None:
        if len(self.triplets) != len(self.config.channels):
            raise ShapeMismatch("stack must hold one triplet per configured channel")
        object.__setattr__(self, "triplets", tuple(self.triplets))

    def triplet(self, window: int) -> FrameTriplet:
        for ch, trip in zip(self.config.channels, self.triplets):
            if ch.window == window:
                return trip
        raise KeyError(f"window {window} not in stack")


def expected_triplet(
    phantom: Phantom,
    channel: FilterChannel,
    pulse: PumpPulse,
    gate: GateConfig,
    *,
    noise: NoiseConfig | None = None,
    psf_sigma_px: float = 0.8,
) -> FrameTriplet:
    """Noiseless expected rasters for one channel.

    reference/decay integrate the emission over their gates, scaled by
    illumination, amplitude and the channel yield; the background gate sees
    only the dark level (plus any ambient term, which is added to all three
    gates).  The PSF blur is applied to the signal before those offsets.
    """
    gate.validate(pulse)
    if channel.index > phantom.n_channels:
        raise ShapeMismatch(
            f"channel index {channel.index} exceeds phantom lifetime stack ({phantom.n_channels})"
        )
    noise = noise or NoiseConfig(shot_noise=False)
    tau = phantom.lifetime_maps_ns[channel.index - 1]
    scale = phantom.amplitude_map * phantom.illumination_map * channel.yield_for(phantom.label_map)

    T = gate.width_ns
    ref = gated_emission(pulse, tau, scale, gate.reference_start_ns, gate.reference_start_ns + T)
    dec = gated_emission(pulse, tau, scale, gate.decay_start_ns, gate.decay_start_ns + T)
    if psf_sigma_px > 0:
        ref = gaussian_filter(ref, sigma=psf_sigma_px, mode="reflect")
        dec = gaussian_filter(dec, sigma=psf_sigma_px, mode="reflect")
    offset = noise.dark_level + noise.ambient_level
    bg = np.full_like(ref, offset)
    return FrameTriplet(reference=ref + offset, decay=dec + offset, background=bg)


def _sample_gate(rng: np.random.Generator, expected: np.ndarray, pulses: int, noise: NoiseConfig) -> np.ndarray:
    out = expected
    if noise.shot_noise:
        out = rng.poisson(np.maximum(expected, 0.0) * pulses).astype(float) / pulses
    if noise.read_noise_sigma > 0:
        out = out + rng.normal(0.0, noise.read_noise_sigma / np.sqrt(pulses), expected.shape)
    return out


def _acquire_channel(phantom: Phantom, config: AcquisitionConfig, channel: FilterChannel) -> FrameTriplet:
    expected = expected_triplet(
        phantom, channel, config.pulse, config.gate, noise=config.noise, psf_sigma_px=config.psf_sigma_px
    )
    if not config.noise.enabled:
        return expected
    rng = np.random.default_rng((config.seed, channel.index))
    n = config.pulses_averaged
    return FrameTriplet(
        reference=_sample_gate(rng, expected.reference, n, config.noise),
        decay=_sample_gate(rng, expected.decay, n, config.noise),
        background=_sample_gate(rng, expected.background, n, config.noise),
    )


def acquire(phantom: Phantom, config: AcquisitionConfig, *, parallel: bool = False) -> ChannelStack:
    """Acquire every configured channel; deterministic for a fixed seed
    whether channels run serially or in parallel."""
    if parallel and len(config.channels) > 1:
        with ThreadPoolExecutor(max_workers=min(len(config.channels), 9)) as pool:
            triplets = tuple(pool.map(lambda ch: _acquire_channel(phantom, config, ch), config.channels))
    else:
        triplets = tuple(_acquire_channel(phantom, config, ch) for ch in config.channels)
    return ChannelStack(triplets=triplets, config=config, phantom_id=phantom.phantom_id)


def default_acquisition(
    *,
    gate_width_ns: float = 20.0,
    fall_tau_ns: float = 1.0,
    peak_intensity: float = 125.0,
    pulses_averaged: int = 1,
    noise: NoiseConfig | None = None,
    seed: int = 0,
    psf_sigma_px: float = 0.8,
    channels: tuple[FilterChannel, ...] | None = None,
) -> AcquisitionConfig:
    """Desk-scale defaults: counts scaled so the shot-noise level lands near
    the bench system's ratio spread (about 0.007 per pixel)."""
    pulse = PumpPulse(peak_intensity=peak_intensity, fall_tau_ns=fall_tau_ns)
    gate = GateConfig.for_pulse(pulse, gate_width_ns)
    return AcquisitionConfig(
        pulse=pulse,
        gate=gate,
        channels=channels or default_channels(),
        pulses_averaged=pulses_averaged,
        noise=noise or NoiseConfig(),
        seed=seed,
        psf_sigma_px=psf_sigma_px,
    )
