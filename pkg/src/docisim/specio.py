"""Declarative phantom/acquisition documents (JSON).

A spec document picks a phantom kind ("tissue", "usaf", "dye_drops", or
"custom" with explicit class tables and region lists) and optionally an
"acquisition" block (gate width, pulse, averaging, noise, seed, PSF).
`load_phantom_spec` turns one into a (Phantom, AcquisitionConfig) pair.
"""

from __future__ import annotations

import json
from pathlib import Path

from .camera import AcquisitionConfig, NoiseConfig, default_acquisition, default_channels
from .phantom import (
    ClassSpec,
    IlluminationSpec,
    Phantom,
    Region,
    build_phantom,
    make_dye_drop_phantom,
    make_tissue_phantom,
    make_usaf_phantom,
)


def _illumination(doc: dict | None) -> IlluminationSpec | None:
    if doc is None:
        return None
    return IlluminationSpec(model=doc.get("model", "uniform"), falloff=doc.get("falloff", 1.0))


def _class_spec(doc: dict) -> ClassSpec:
    return ClassSpec(
        label=int(doc["label"]),
        name=doc.get("name", f"class{doc['label']}"),
        lifetime_ns=doc.get("lifetime_ns", 1.0),
        amplitude=float(doc.get("amplitude", 1.0)),
        emission_yield=doc.get("yield", 1.0),
    )


def _region(doc: dict) -> Region:
    kw = dict(
        shape=doc["shape"],
        label=int(doc["label"]),
        layer=doc.get("layer", "base"),
        amplitude=doc.get("amplitude"),
    )
    for key in ("center_mm", "radii_mm", "origin_mm", "size_mm"):
        if key in doc:
            kw[key] = tuple(doc[key])
    if "radius_mm" in doc:
        kw["radius_mm"] = float(doc["radius_mm"])
    if "points_mm" in doc:
        kw["points_mm"] = tuple(tuple(p) for p in doc["points_mm"])
    return Region(**kw)


def build_from_spec(doc: dict) -> Phantom:
    kind = doc.get("kind", "custom")
    size = dict(width_px=doc.get("width_px", 512), height_px=doc.get("height_px", 512))
    fov = doc.get("fov_mm", 20.0)
    if kind == "tissue":
        return make_tissue_phantom(
            size["width_px"],
            size["height_px"],
            fov_mm=fov,
            cancer_delta_ns=doc.get("cancer_delta_ns", 1.0),
            separating_windows=tuple(doc.get("separating_windows", (3, 7, 8, 9, 10))),
            illumination=_illumination(doc.get("illumination")),
        )
    if kind == "usaf":
        return make_usaf_phantom(
            size["width_px"],
            size["height_px"],
            fov_mm=fov,
            finest_bar_um=doc.get("finest_bar_um", 70.0),
            n_groups=doc.get("n_groups", 4),
            bar_lifetime_ns=doc.get("bar_lifetime_ns", 3.0),
            illumination_falloff=doc.get("illumination", {}).get("falloff", 3.0),
        )
    if kind == "dye_drops":
        return make_dye_drop_phantom(
            size["width_px"],
            size["height_px"],
            fov_mm=fov,
            lifetimes_ns=tuple(doc.get("lifetimes_ns", (1.0, 2.5, 4.0))),
            amplitudes=tuple(doc.get("amplitudes", (0.4, 4.0))),
            illumination_falloff=doc.get("illumination", {}).get("falloff", 3.0),
        )
    if kind == "custom":
        classes = [_class_spec(c) for c in doc["classes"]]
        regions = [_region(r) for r in doc.get("regions", [])]
        return build_phantom(
            size["width_px"],
            size["height_px"],
            classes,
            regions,
            fov_mm=fov,
            illumination=_illumination(doc.get("illumination")),
            meta=doc.get("meta"),
        )
    raise ValueError(f"unknown phantom kind {kind!r}")


def acquisition_from_spec(doc: dict, *, yield_table: dict | None = None) -> AcquisitionConfig:
    acq = doc.get("acquisition", {})
    noise_doc = acq.get("noise", doc.get("noise", {}))
    noise = NoiseConfig(
        shot_noise=noise_doc.get("shot_noise", True),
        read_noise_sigma=noise_doc.get("read_noise_sigma", 0.0),
        dark_level=noise_doc.get("dark_level", 0.0),
        ambient_level=noise_doc.get("ambient_level", 0.0),
    )
    channels = default_channels(yield_table) if yield_table else None
    return default_acquisition(
        gate_width_ns=acq.get("gate_width_ns", 20.0),
        fall_tau_ns=acq.get("fall_tau_ns", 1.0),
        peak_intensity=acq.get("peak_intensity", 125.0),
        pulses_averaged=acq.get("pulses_averaged", 1),
        noise=noise,
        seed=acq.get("seed", doc.get("seed", 0)),
        psf_sigma_px=acq.get("psf_sigma_px", doc.get("psf_sigma_px", 0.8)),
        channels=channels,
    )


def load_phantom_spec(source: str | Path | dict) -> tuple[Phantom, AcquisitionConfig]:
    doc = source if isinstance(source, dict) else json.loads(Path(source).read_text())
    phantom = build_from_spec(doc)
    yield_table = None
    if doc.get("kind", "custom") == "custom":
        yields = {int(c["label"]): _class_spec(c).yields().tolist() for c in doc["classes"]}
        if any(any(v != 1.0 for v in per) for per in yields.values()):
            yield_table = yields
    return phantom, acquisition_from_spec(doc, yield_table=yield_table)
