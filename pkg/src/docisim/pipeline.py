"""Per-pixel ratio maps with validity masking, ROI statistics and rendering.

The map value is (decay - background) / (reference - background).  Pixels
whose background-subtracted reference does not clear a floor are marked
invalid: their value is stored as 0, they are excluded from every
statistic and normalization, and they render in a reserved color.  Invalid
pixels are never interpolated.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
import numpy as np

from .camera import FilterChannel, FrameTriplet
from .errors import EmptyRoi, ShapeMismatch


@dataclass(frozen=True)
class DociMap:
    """Ratio raster plus its validity mask."""

    values: np.ndarray
    valid: np.ndarray
    denominator_floor: float
    channel: FilterChannel | None = None

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        valid = np.ascontiguousarray(np.asarray(self.valid, dtype=bool))
        if vals.shape != valid.shape or vals.ndim != 2:
            raise ShapeMismatch("values and valid must be matching 2-D rasters")
        if not np.all(np.isfinite(vals[valid])):
            raise ValueError("values must be finite wherever valid")
        vals.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", valid)


@dataclass(frozen=True)
class RoiStats:
    mean: float
    std: float
    n: int
    window: int | None = None


@dataclass(frozen=True)
class TTestResult:
    """Welch two-sample comparison; p-value from the Student-t distribution
    with Welch-Satterthwaite degrees of freedom."""

    t: float
    p_value: float
    df: float


def default_floor(triplet: FrameTriplet, fraction: float = 1e-3) -> float:
    """Validity floor: `fraction` of the 99th percentile of the
    background-subtracted reference, clamped to a tiny positive value so
    all-dark frames simply invalidate everywhere."""
    headroom = np.percentile(triplet.reference - triplet.background, 99.0)
    return max(fraction * float(headroom), 1e-12)


def compute_doci(triplet: FrameTriplet, floor: float) -> DociMap:
    """Ratio map with validity mask; `floor` must be positive.

    valid is exactly (reference - background) > floor; invalid values are 0.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    num = triplet.decay - triplet.background
    den = triplet.reference - triplet.background
    valid = den > floor
    values = np.where(valid, num / np.where(valid, den, 1.0), 0.0)
    return DociMap(values=values, valid=valid, denominator_floor=float(floor))


def _roi_mask(roi, shape: tuple[int, int]) -> np.ndarray:
    if isinstance(roi, np.ndarray) and roi.dtype == bool:
        if roi.shape != shape:
            raise ShapeMismatch("boolean ROI must match the raster shape")
        return roi
    x, y, w, h = roi
    if w <= 0 or h <= 0:
        raise ValueError("ROI width and height must be positive")
    mask = np.zeros(shape, dtype=bool)
    mask[max(y, 0) : y + h, max(x, 0) : x + w] = True
    return mask


def roi_stats(doci_map: DociMap, roi) -> RoiStats:
    """Mean and sample (n-1) standard deviation over the valid pixels of a
    rectangular (x, y, w, h) ROI or boolean mask.  Raises EmptyRoi when the
    ROI contains no valid pixels."""
    mask = _roi_mask(roi, doci_map.values.shape) & doci_map.valid
    n = int(mask.sum())
    if n == 0:
        raise EmptyRoi("ROI contains no valid pixels")
    vals = doci_map.values[mask]
    std = float(np.std(vals, ddof=1)) if n > 1 else 0.0
    window = doci_map.channel.window if doci_map.channel else None
    return RoiStats(mean=float(vals.mean()), std=std, n=n, window=window)


def roi_compare(a: RoiStats, b: RoiStats) -> TTestResult:
    """Welch two-sample t statistic (a minus b) with a two-sided p-value.

    Both samples need n >= 2.  When both spreads are zero the comparison is
    degenerate: p = 1 for equal means, p = 0 otherwise.
    """
    if a.n < 2 or b.n < 2:
        raise ValueError("both samples need n >= 2")
    va, vb = a.std**2 / a.n, b.std**2 / b.n
    se2 = va + vb
    if se2 == 0.0:
        if a.mean == b.mean:
            return TTestResult(t=0.0, p_value=1.0, df=float(a.n + b.n - 2))
        return TTestResult(t=float(np.sign(a.mean - b.mean)) * np.inf, p_value=0.0, df=float(a.n + b.n - 2))
    t = (a.mean - b.mean) / np.sqrt(se2)
    df = se2**2 / (va**2 / (a.n - 1) + vb**2 / (b.n - 1))
    from scipy.stats import t as student_t

    p = 2.0 * float(student_t.sf(abs(t), df))
    return TTestResult(t=float(t), p_value=p, df=float(df))


@dataclass(frozen=True)
class Palette:
    """Monotone color ramp plus the reserved color for unreliable pixels."""

    name: str
    stops: tuple  # ((position, (r, g, b)), ...) with positions ascending 0..1
    invalid_color: tuple[int, int, int] = (0, 0, 255)

    def lut(self, n: int = 256) -> np.ndarray:
        pos = np.array([p for p, _ in self.stops])
        cols = np.array([c for _, c in self.stops], dtype=float)
        x = np.linspace(0.0, 1.0, n)
        out = np.stack([np.interp(x, pos, cols[:, i]) for i in range(3)], axis=1)
        return np.round(out).astype(np.uint8)


PALETTES = {
    "doci": Palette(
        name="doci",
        stops=(
            (0.0, (0, 0, 128)),
            (0.35, (0, 220, 220)),
            (0.7, (255, 230, 0)),
            (1.0, (230, 0, 0)),
        ),
    ),
    "gray": Palette(name="gray", stops=((0.0, (0, 0, 0)), (1.0, (255, 255, 255)))),
}


def render_heatmap(
    doci_map: DociMap,
    palette: str | Palette = "doci",
    *,
    vmin: float | None = None,
    vmax: float | None = None,
) -> np.ndarray:
    """8-bit RGB rendering: valid pixels normalized onto the palette (per-image
    min-max by default, or the fixed [vmin, vmax] range for cross-image
    comparability), invalid pixels in the reserved color.  An all-invalid
    map renders entirely in the reserved color."""
    pal = PALETTES[palette] if isinstance(palette, str) else palette
    lut = pal.lut()
    vals = doci_map.values
    valid = doci_map.valid
    out = np.empty(vals.shape + (3,), dtype=np.uint8)
    out[:] = pal.invalid_color
    if not valid.any():
        return out
    lo = float(vals[valid].min()) if vmin is None else float(vmin)
    hi = float(vals[valid].max()) if vmax is None else float(vmax)
    if hi > lo:
        norm = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
    else:
        norm = np.full_like(vals, 0.5)
    idx = np.round(norm * (len(lut) - 1)).astype(int)
    out[valid] = lut[idx[valid]]
    return out


def png_bytes(rgb: np.ndarray) -> bytes:
    """Encode an 8-bit grayscale or RGB raster as PNG."""
    from PIL import Image

    arr = np.asarray(rgb)
    if arr.dtype != np.uint8:
        raise ValueError("expected a uint8 raster")
    img = Image.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def gray_png_bytes(raster: np.ndarray, *, lo: float | None = None, hi: float | None = None) -> bytes:
    """Normalize a float raster to 8-bit grayscale and encode as PNG."""
    arr = np.asarray(raster, dtype=float)
    lo = float(arr.min()) if lo is None else lo
    hi = float(arr.max()) if hi is None else hi
    if hi > lo:
        scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
    else:
        scaled = np.zeros_like(arr)
    return png_bytes(np.round(scaled * 255).astype(np.uint8))
