"""Calibration and resolution procedures.

Linearity: the gated ratio is nearly linear in lifetime over 0.1..6 ns at
sufficient gate widths; an ordinary least-squares fit against ground-truth
lifetimes yields the ns-per-ratio-unit conversion (the reciprocal slope).
The simulator itself plays the reference lifetime instrument here.

Temporal resolution is the measured ratio spread times that conversion;
spatial resolution is read off a bar target by Michelson contrast of the
across-bar intensity profile (the ratio map itself stays uniform on the
coated bars, which is the point of the method).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lifetime import GateConfig, PumpPulse, gated_emission
from .phantom import Phantom
from .pipeline import DociMap, roi_stats


@dataclass(frozen=True)
class CalibrationFit:
    """OLS fit of ratio values against ground-truth lifetimes."""

    slope: float
    intercept: float
    r_squared: float
    inv_slope: float
    gate_width_ns: float
    lifetimes_ns: tuple[float, ...]
    values: tuple[float, ...]


@dataclass(frozen=True)
class GroupContrast:
    spacing_um: float
    bar_px: int
    intensity_contrast: float
    doci_contrast: float
    doci_spread: float
    resolved: bool


@dataclass(frozen=True)
class ResolutionReport:
    finest_resolved_spacing_um: float | None
    criterion_contrast: float
    groups: tuple[GroupContrast, ...]

    @property
    def resolved_any(self) -> bool:
        return self.finest_resolved_spacing_um is not None


def linearity_fit(
    pulse: PumpPulse,
    gate_width_ns: float,
    lifetimes_ns: Sequence[float],
    *,
    amplitude: float = 1.0,
) -> CalibrationFit:
    """Least-squares line through (lifetime, ratio) points.

    Two points make a (trivially exact) line; the canonical calibration
    grid is five or more lifetimes spanning 0.1..6 ns.  Amplitude is
    irrelevant to the fit (the ratio cancels it); the parameter exists to
    prove that.
    """
    taus = np.asarray(list(lifetimes_ns), dtype=float)
    if taus.size < 2:
        raise ValueError("need at least two lifetimes for a calibration fit")
    if np.any(taus <= 0):
        raise ValueError("lifetimes must be positive")
    gate = GateConfig.for_pulse(pulse, gate_width_ns, tau_max_ns=float(taus.max()))
    m_ref = gated_emission(pulse, taus, amplitude, gate.reference_start_ns, gate.reference_start_ns + gate_width_ns)
    m_dec = gated_emission(pulse, taus, amplitude, gate.decay_start_ns, gate.decay_start_ns + gate_width_ns)
    values = m_dec / m_ref
    slope, intercept = np.polyfit(taus, values, 1)
    pred = slope * taus + intercept
    ss_res = float(np.sum((values - pred) ** 2))
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return CalibrationFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        inv_slope=float(1.0 / slope),
        gate_width_ns=float(gate_width_ns),
        lifetimes_ns=tuple(taus.tolist()),
        values=tuple(np.asarray(values).tolist()),
    )


def tune_fall_tau(
    target_inv_slope: float,
    *,
    gate_width_ns: float = 20.0,
    lifetimes_ns: Sequence[float] | None = None,
    bracket: tuple[float, float] = (0.3, 4.0),
    tol: float = 1e-4,
    max_iter: int = 80,
) -> tuple[float, CalibrationFit]:
    """Bisection on the pump fall constant until the fit's reciprocal slope
    hits the target.  The reciprocal slope grows with the fall constant, so
    the target must lie inside the bracket's value range."""
    if lifetimes_ns is None:
        lifetimes_ns = np.arange(0.1, 6.0001, 0.1)

    def inv_slope(fall_tau: float) -> float:
        return linearity_fit(PumpPulse(fall_tau_ns=fall_tau), gate_width_ns, lifetimes_ns).inv_slope

    lo, hi = bracket
    f_lo, f_hi = inv_slope(lo) - target_inv_slope, inv_slope(hi) - target_inv_slope
    if f_lo > 0 or f_hi < 0:
        raise ValueError(f"target {target_inv_slope} not bracketed by fall-tau range {bracket}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = inv_slope(mid) - target_inv_slope
        if abs(f_mid) < tol or (hi - lo) < 1e-12:
            break
        if f_mid > 0:
            hi = mid
        else:
            lo = mid
    mid = 0.5 * (lo + hi)
    fit = linearity_fit(PumpPulse(fall_tau_ns=mid), gate_width_ns, lifetimes_ns)
    return mid, fit


def temporal_resolution(avg_std: float, ratio: float) -> float:
    """Smallest distinguishable lifetime difference: the ratio spread times
    the ns-per-ratio-unit conversion.  Display with `format_ns`."""
    if not (avg_std > 0 and ratio > 0):
        raise ValueError("avg_std and ratio must be positive")
    return avg_std * ratio


def format_ns(value: float) -> str:
    return f"{value:.2f}"


def measure_stack_std(doci_map: DociMap, rois: Sequence[tuple[int, int, int, int]]) -> float:
    """Mean of the per-ROI standard deviations on one channel's map.  The
    canonical procedure uses the six drop-centered squares from the
    dye-drop phantom's meta."""
    if len(rois) == 0:
        raise ValueError("need at least one ROI")
    stds = [roi_stats(doci_map, roi).std for roi in rois]
    return float(np.mean(stds))


def _michelson(profile: np.ndarray) -> float:
    finite = profile[np.isfinite(profile)]
    if finite.size < 2:
        return 0.0
    hi, lo = float(finite.max()), float(finite.min())
    if hi + lo <= 0:
        return 0.0
    return (hi - lo) / (hi + lo)


def spatial_resolution(
    doci_map: DociMap,
    reference: np.ndarray,
    phantom: Phantom,
    criterion: float = 0.26,
) -> ResolutionReport:
    """Finest bar spacing whose across-bar intensity profile keeps Michelson
    contrast at or above `criterion`.

    Per group the report also carries the contrast of the validity-weighted
    ratio profile and the spread of ratio values on valid bar pixels (zero
    spread means the map is uniform on the coating, as it should be).
    Returns finest_resolved_spacing_um = None when nothing resolves.
    """
    if not 0.0 < criterion < 1.0:
        raise ValueError("criterion must be in (0, 1)")
    groups_meta = phantom.meta.get("bar_groups")
    if not groups_meta:
        raise ValueError("phantom carries no bar-group metadata")
    reference = np.asarray(reference, dtype=float)

    rows = []
    for g in groups_meta:
        x0, x1, y0, y1 = g["x0"], g["x1"], g["y0"], g["y1"]
        band = reference[y0:y1, x0:x1]
        intensity_profile = band.mean(axis=0)

        vals = doci_map.values[y0:y1, x0:x1]
        valid = doci_map.valid[y0:y1, x0:x1]
        with np.errstate(invalid="ignore"):
            doci_profile = np.where(valid.any(axis=0), (vals * valid).sum(axis=0) / valid.sum(axis=0), np.nan)

        bars = (phantom.label_map[y0:y1, x0:x1] > 0) & valid
        spread = float(np.ptp(vals[bars])) if bars.any() else float("nan")

        contrast = _michelson(intensity_profile)
        rows.append(
            GroupContrast(
                spacing_um=float(g["spacing_um"]),
                bar_px=int(g["bar_px"]),
                intensity_contrast=contrast,
                doci_contrast=_michelson(doci_profile),
                doci_spread=spread,
                resolved=contrast >= criterion,
            )
        )

    resolved = [r.spacing_um for r in rows if r.resolved]
    finest = min(resolved) if resolved else None
    return ResolutionReport(
        finest_resolved_spacing_um=finest,
        criterion_contrast=criterion,
        groups=tuple(rows),
    )
