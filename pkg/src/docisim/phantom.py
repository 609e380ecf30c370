"""Synthetic scenes with known per-pixel ground truth.

A phantom carries, per pixel: a lifetime for each of the nine filter
channels, an emission amplitude, a relative illumination level, and a
small-integer class label (0 is the corkboard background, higher values
are tissue classes with a dedicated cancer label).  Factories build the
three canonical scenes used throughout: a labeled tissue specimen, a
three-bar resolution target, and a grid of dye drops at two
concentrations.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import OverlappingRegions, ShapeMismatch, SpacingBelowNyquist

N_CHANNELS = 9
WINDOWS = tuple(range(2, 11))  # filter-wheel window numbers for the 9 channels

LABEL_CORKBOARD = 0
LABEL_CARTILAGE = 1
LABEL_FIBROUS = 2
LABEL_CANCER = 3

CLASS_NAMES = {
    LABEL_CORKBOARD: "corkboard",
    LABEL_CARTILAGE: "cartilage",
    LABEL_FIBROUS: "fibrous",
    LABEL_CANCER: "cancer",
}

# Channels where the default cancer class is offset from fibrous tissue
# (windows centered at 415, 520, 542, 572 and 605 nm).
DEFAULT_SEPARATING_WINDOWS = (3, 7, 8, 9, 10)


def _per_channel(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(N_CHANNELS, float(arr))
    if arr.shape != (N_CHANNELS,):
        raise ValueError(f"{name} must be a scalar or a {N_CHANNELS}-vector")
    return arr


@dataclass(frozen=True)
class ClassSpec:
    """Ground-truth optical properties of one label class."""

    label: int
    name: str
    lifetime_ns: object = 1.0     # scalar or per-channel sequence
    amplitude: float = 1.0
    emission_yield: object = 1.0  # scalar or per-channel sequence

    def lifetimes(self) -> np.ndarray:
        return _per_channel(self.lifetime_ns, "lifetime_ns")

    def yields(self) -> np.ndarray:
        return _per_channel(self.emission_yield, "emission_yield")


@dataclass(frozen=True)
class Region:
    """One painted region.  Base regions are painted first in list order;
    lesion regions are painted afterwards and may not mix cancer with a
    benign lesion on the same pixels."""

    shape: str                      # disk | ellipse | rect | polygon | bars
    label: int
    layer: str = "base"             # base | lesion
    center_mm: tuple[float, float] | None = None
    radius_mm: float | None = None
    radii_mm: tuple[float, float] | None = None
    origin_mm: tuple[float, float] | None = None
    size_mm: tuple[float, float] | None = None
    points_mm: tuple | None = None
    amplitude: float | None = None  # overrides the class amplitude inside the region


@dataclass(frozen=True)
class IlluminationSpec:
    model: str = "uniform"          # uniform | radial
    falloff: float = 1.0            # center-to-corner intensity ratio for radial

    def raster(self, width_px: int, height_px: int) -> np.ndarray:
        if self.model == "uniform":
            return np.ones((height_px, width_px))
        if self.model == "radial":
            if not self.falloff >= 1.0:
                raise ValueError("radial falloff must be >= 1")
            yy, xx = np.mgrid[0:height_px, 0:width_px]
            cx, cy = (width_px - 1) / 2.0, (height_px - 1) / 2.0
            r2 = (xx - cx) ** 2 + (yy - cy) ** 2
            r2max = cx**2 + cy**2
            return 1.0 - (1.0 - 1.0 / self.falloff) * (r2 / r2max)
        raise ValueError(f"unknown illumination model {self.model!r}")


@dataclass(frozen=True)
class Phantom:
    """Immutable synthetic scene; all rasters are read-only and share a
    (height, width) footprint.  Lifetime maps are stacked per channel."""

    lifetime_maps_ns: np.ndarray   # (N_CHANNELS, H, W)
    amplitude_map: np.ndarray      # (H, W)
    illumination_map: np.ndarray   # (H, W)
    label_map: np.ndarray          # (H, W) integer labels
    pixel_pitch_mm: float
    phantom_id: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        life = np.ascontiguousarray(np.asarray(self.lifetime_maps_ns, dtype=float))
        amp = np.ascontiguousarray(np.asarray(self.amplitude_map, dtype=float))
        illum = np.ascontiguousarray(np.asarray(self.illumination_map, dtype=float))
        labels = np.ascontiguousarray(np.asarray(self.label_map))
        if life.ndim != 3:
            raise ShapeMismatch("lifetime_maps_ns must be (channels, height, width)")
        if amp.shape != life.shape[1:] or illum.shape != amp.shape or labels.shape != amp.shape:
            raise ShapeMismatch("phantom rasters must share dimensions")
        if np.any(life <= 0) or np.any(life > 20.0):
            raise ValueError("lifetimes must lie in (0, 20] ns")
        if np.any(amp < 0) or np.any(illum < 0):
            raise ValueError("amplitude and illumination must be nonnegative")
        if not self.pixel_pitch_mm > 0:
            raise ValueError("pixel_pitch_mm must be positive")
        for arr in (life, amp, illum, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "lifetime_maps_ns", life)
        object.__setattr__(self, "amplitude_map", amp)
        object.__setattr__(self, "illumination_map", illum)
        object.__setattr__(self, "label_map", labels)

    @property
    def height_px(self) -> int:
        return self.amplitude_map.shape[0]

    @property
    def width_px(self) -> int:
        return self.amplitude_map.shape[1]

    @property
    def n_channels(self) -> int:
        return self.lifetime_maps_ns.shape[0]

    def tissue_mask(self) -> np.ndarray:
        """Specimen pixels: everything that is not corkboard background."""
        return self.label_map != LABEL_CORKBOARD


def _region_mask(region: Region, width_px: int, height_px: int, pitch_mm: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height_px, 0:width_px]
    x_mm = (xx + 0.5) * pitch_mm
    y_mm = (yy + 0.5) * pitch_mm
    if region.shape == "disk":
        cx, cy = region.center_mm
        return (x_mm - cx) ** 2 + (y_mm - cy) ** 2 <= region.radius_mm**2
    if region.shape == "ellipse":
        cx, cy = region.center_mm
        rx, ry = region.radii_mm
        return ((x_mm - cx) / rx) ** 2 + ((y_mm - cy) / ry) ** 2 <= 1.0
    if region.shape == "rect":
        ox, oy = region.origin_mm
        w, h = region.size_mm
        return (x_mm >= ox) & (x_mm < ox + w) & (y_mm >= oy) & (y_mm < oy + h)
    if region.shape == "polygon":
        from PIL import Image, ImageDraw

        img = Image.new("1", (width_px, height_px), 0)
        pts = [(x / pitch_mm - 0.5, y / pitch_mm - 0.5) for x, y in region.points_mm]
        ImageDraw.Draw(img).polygon(pts, fill=1)
        return np.asarray(img, dtype=bool)
    raise ValueError(f"unknown region shape {region.shape!r}")


def build_phantom(
    width_px: int,
    height_px: int,
    classes: Sequence[ClassSpec],
    regions: Sequence[Region],
    *,
    fov_mm: float = 20.0,
    background_label: int = LABEL_CORKBOARD,
    illumination: IlluminationSpec | None = None,
    phantom_id: str | None = None,
    meta: dict | None = None,
) -> Phantom:
    """Rasterize a declarative scene description into a Phantom.

    Base regions are painted in order over the background label; lesion
    regions follow.  A cancer lesion overlapping a benign lesion (or vice
    versa) raises OverlappingRegions: a pixel's ground truth must not
    depend on lesion paint order.
    """
    pitch = fov_mm / width_px
    by_label = {c.label: c for c in classes}
    if background_label not in by_label:
        raise ValueError("classes must include the background label")

    label_map = np.full((height_px, width_px), background_label, dtype=np.int16)
    amp_override = np.full((height_px, width_px), np.nan)

    lesion_cancer = np.zeros((height_px, width_px), dtype=bool)
    lesion_benign = np.zeros((height_px, width_px), dtype=bool)
    ordered = [r for r in regions if r.layer == "base"] + [r for r in regions if r.layer == "lesion"]
    for region in ordered:
        if region.label not in by_label:
            raise ValueError(f"region references unknown class label {region.label}")
        mask = _region_mask(region, width_px, height_px, pitch)
        if region.layer == "lesion":
            is_cancer = region.label == LABEL_CANCER
            clash = mask & (lesion_benign if is_cancer else lesion_cancer)
            if np.any(clash):
                raise OverlappingRegions(
                    f"{'cancer' if is_cancer else 'benign'} region overlaps a "
                    f"{'benign' if is_cancer else 'cancer'} lesion on {int(clash.sum())} pixels"
                )
            (lesion_cancer if is_cancer else lesion_benign)[mask] = True
        label_map[mask] = region.label
        if region.amplitude is not None:
            amp_override[mask] = region.amplitude

    max_label = int(label_map.max())
    life_table = np.ones((max_label + 1, N_CHANNELS))
    amp_table = np.zeros(max_label + 1)
    for label, spec in by_label.items():
        if label <= max_label:
            life_table[label] = spec.lifetimes()
            amp_table[label] = spec.amplitude

    lifetime_maps = life_table[label_map].transpose(2, 0, 1)
    amplitude = amp_table[label_map]
    amplitude = np.where(np.isnan(amp_override), amplitude, amp_override)

    illum = (illumination or IlluminationSpec()).raster(width_px, height_px)

    if phantom_id is None:
        digest = hashlib.sha256(label_map.tobytes() + amplitude.tobytes()).hexdigest()[:8]
        phantom_id = f"phantom-{width_px}x{height_px}-{digest}"
    return Phantom(
        lifetime_maps_ns=lifetime_maps,
        amplitude_map=amplitude,
        illumination_map=illum,
        label_map=label_map,
        pixel_pitch_mm=pitch,
        phantom_id=phantom_id,
        meta=dict(meta or {}),
    )


def tissue_classes(
    *,
    cancer_delta_ns: float = 1.0,
    separating_windows: Sequence[int] = DEFAULT_SEPARATING_WINDOWS,
    fibrous_ns: float = 2.0,
    cartilage_ns: float = 3.0,
    cartilage_separating_ns: float = 1.7,
    corkboard_ns: float = 1.2,
) -> list[ClassSpec]:
    """Default per-class, per-channel lifetime tables.

    Cancer sits `cancer_delta_ns` above fibrous tissue in the separating
    windows only.  Cartilage runs long everywhere else but short in the
    separating windows, so the two benign tissues and cancer are pairwise
    separable only when channels are combined; in any single window at
    least two classes nearly coincide.
    """
    sep = [w - 2 for w in separating_windows]
    cancer = np.full(N_CHANNELS, fibrous_ns)
    cancer[sep] = fibrous_ns + cancer_delta_ns
    cartilage = np.full(N_CHANNELS, cartilage_ns)
    cartilage[sep] = cartilage_separating_ns
    return [
        ClassSpec(LABEL_CORKBOARD, "corkboard", corkboard_ns, amplitude=0.7),
        ClassSpec(LABEL_CARTILAGE, "cartilage", cartilage, amplitude=1.1),
        ClassSpec(LABEL_FIBROUS, "fibrous", fibrous_ns, amplitude=1.0),
        ClassSpec(LABEL_CANCER, "cancer", cancer, amplitude=0.95),
    ]


def make_tissue_phantom(
    width_px: int = 512,
    height_px: int = 512,
    *,
    fov_mm: float = 20.0,
    classes: Sequence[ClassSpec] | None = None,
    regions: Sequence[Region] | None = None,
    cancer_delta_ns: float = 1.0,
    separating_windows: Sequence[int] = DEFAULT_SEPARATING_WINDOWS,
    illumination: IlluminationSpec | None = None,
) -> Phantom:
    """Labeled specimen on a corkboard: fibrous body, a cartilage band, and
    one cancer lesion, with the default class lifetime tables."""
    if classes is None:
        classes = tissue_classes(
            cancer_delta_ns=cancer_delta_ns, separating_windows=separating_windows
        )
    if regions is None:
        regions = [
            Region("ellipse", LABEL_FIBROUS, center_mm=(10.0, 10.4), radii_mm=(7.6, 6.2)),
            Region("ellipse", LABEL_CARTILAGE, layer="lesion", center_mm=(10.0, 6.4), radii_mm=(4.2, 1.7)),
            Region("disk", LABEL_CANCER, layer="lesion", center_mm=(10.6, 12.2), radius_mm=2.5),
        ]
    if illumination is None:
        illumination = IlluminationSpec("radial", falloff=2.0)
    meta = {
        "kind": "tissue",
        "separating_windows": list(separating_windows),
        "cancer_delta_ns": cancer_delta_ns,
    }
    return build_phantom(
        width_px, height_px, classes, regions, fov_mm=fov_mm, illumination=illumination, meta=meta
    )


def make_usaf_phantom(
    width_px: int = 512,
    height_px: int = 512,
    *,
    fov_mm: float = 20.0,
    finest_bar_um: float = 70.0,
    n_groups: int = 4,
    n_bars: int = 3,
    bar_lifetime_ns: float = 3.0,
    bar_amplitude: float = 1.0,
    illumination_falloff: float = 3.0,
) -> Phantom:
    """Three-bar resolution target: groups of vertical bars at spacings that
    halve down to `finest_bar_um`, one uniform fluorescent coating on the
    bars and zero amplitude elsewhere, under a radial illumination falloff.

    Bar width in pixels is ceil(spacing / pitch); a finest bar below two
    pixels raises SpacingBelowNyquist.  Group pixel bounds are recorded in
    meta["bar_groups"] (x0/x1/y0/y1, half-open).
    """
    pitch_um = fov_mm / width_px * 1000.0
    spacings = [finest_bar_um * 2 ** (n_groups - 1 - i) for i in range(n_groups)]  # coarse -> fine
    widths_px = [int(np.ceil(s / pitch_um)) for s in spacings]
    if min(widths_px) < 2:
        raise SpacingBelowNyquist(
            f"finest bar {finest_bar_um} um is under two pixels at {pitch_um:.2f} um/px"
        )

    label_map = np.zeros((height_px, width_px), dtype=np.int16)
    groups = []
    group_widths = [(2 * n_bars - 1) * w for w in widths_px]
    gap = (width_px - sum(group_widths)) // (n_groups + 1)
    if gap < 2:
        raise ValueError("bar groups do not fit in the requested raster")
    x = gap
    for spacing, w, gw in zip(spacings, widths_px, group_widths):
        h = max(6 * w, 24)
        y0 = (height_px - h) // 2
        for b in range(n_bars):
            bx = x + b * 2 * w
            label_map[y0 : y0 + h, bx : bx + w] = 1
        groups.append(
            {"spacing_um": spacing, "bar_px": w, "x0": x, "x1": x + gw, "y0": y0, "y1": y0 + h}
        )
        x += gw + gap

    life_table = np.ones((2, N_CHANNELS))
    life_table[1] = _per_channel(bar_lifetime_ns, "bar_lifetime_ns")
    lifetime_maps = life_table[label_map].transpose(2, 0, 1)
    amplitude = np.where(label_map == 1, bar_amplitude, 0.0)
    illum = IlluminationSpec("radial", falloff=illumination_falloff).raster(width_px, height_px)
    return Phantom(
        lifetime_maps_ns=lifetime_maps,
        amplitude_map=amplitude,
        illumination_map=illum,
        label_map=label_map,
        pixel_pitch_mm=fov_mm / width_px,
        phantom_id=f"usaf-{width_px}x{height_px}-{int(finest_bar_um)}um",
        meta={"kind": "usaf", "bar_groups": groups},
    )


def make_dye_drop_phantom(
    width_px: int = 512,
    height_px: int = 512,
    *,
    fov_mm: float = 20.0,
    lifetimes_ns: Sequence[float] = (1.0, 2.5, 4.0),
    amplitudes: Sequence[float] = (0.4, 4.0),
    drop_radius_mm: float = 2.9,
    illumination_falloff: float = 3.0,
    roi_px: int = 50,
) -> Phantom:
    """Six dye drops: three lifetimes in columns, two concentrations in rows.

    meta["roi_rects"] holds one centered (x, y, w, h) square per drop for
    aggregate statistics; meta["drops"] describes each drop.
    """
    if len(lifetimes_ns) != 3 or len(amplitudes) != 2:
        raise ValueError("expected three lifetimes and two concentrations")
    classes = [ClassSpec(0, "slide", lifetime_ns=1.0, amplitude=0.0)]
    regions = []
    drops = []
    rois = []
    pitch = fov_mm / width_px
    xs = (fov_mm * 0.2, fov_mm * 0.5, fov_mm * 0.8)
    ys = (fov_mm * 0.32, fov_mm * 0.68)
    for col, tau in enumerate(lifetimes_ns):
        label = col + 1
        classes.append(ClassSpec(label, f"dye{label}", lifetime_ns=tau, amplitude=1.0))
        for row, amp in enumerate(amplitudes):
            cx, cy = xs[col], ys[row]
            regions.append(
                Region("disk", label, center_mm=(cx, cy), radius_mm=drop_radius_mm, amplitude=amp)
            )
            px, py = int(cx / pitch), int(cy / pitch)
            rois.append((px - roi_px // 2, py - roi_px // 2, roi_px, roi_px))
            drops.append({"label": label, "lifetime_ns": tau, "amplitude": amp, "center_px": (px, py)})
    meta = {"kind": "dye_drops", "roi_rects": rois, "drops": drops}
    return build_phantom(
        width_px,
        height_px,
        classes,
        regions,
        fov_mm=fov_mm,
        illumination=IlluminationSpec("radial", falloff=illumination_falloff),
        meta=meta,
    )
