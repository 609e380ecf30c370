"""Command-line tools: simulate, doci, classify, sweep, calibrate, resolve,
surface, serve.

Every command exits nonzero with a machine-readable JSON error object on
stderr when something goes wrong; normal results go to stdout as JSON
summaries next to the files they write.  DOCI_DATA_DIR sets the default
output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import characterize, specio, workflows
from .camera import acquire
from .classify import parse_channels
from .errors import DociError
from .lifetime import PumpPulse, doci_surface
from .pipeline import gray_png_bytes, png_bytes, render_heatmap
from .stackio import raster_write, read_stack, write_stack
from .workflows import OVERLAY_COLORS

__all__ = ["main", "OVERLAY_COLORS"]


def _data_dir() -> Path:
    return Path(os.environ.get("DOCI_DATA_DIR", "."))


def _out_path(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    return _data_dir() / default_name


def _emit(obj: dict) -> None:
    print(json.dumps(obj, indent=2))


def _warn(obj: dict) -> None:
    print(json.dumps(obj), file=sys.stderr)


def cmd_simulate(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.phantom).read_text())
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        doc = {**doc, "acquisition": {**doc.get("acquisition", {}), **overrides}}
    phantom, config = specio.load_phantom_spec(doc)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    start = time.perf_counter()
    stack = acquire(phantom, config, parallel=args.parallel)
    elapsed = time.perf_counter() - start
    out = _out_path(args.out, "stack")
    write_stack(out, stack, phantom=phantom)
    _emit(
        {
            "stack": str(out),
            "phantom_id": phantom.phantom_id,
            "channels": [ch.window for ch in config.channels],
            "seed": config.seed,
            "acquire_seconds": round(elapsed, 3),
        }
    )
    return 0


def cmd_doci(args: argparse.Namespace) -> int:
    loaded = read_stack(args.stack)
    maps = workflows.maps_from_stack(loaded, floor=args.floor)
    out = _out_path(args.out, "maps")
    out.mkdir(parents=True, exist_ok=True)
    vrange = None
    if args.fixed_range:
        lo, hi = (float(tok) for tok in args.fixed_range.split(","))
        vrange = (lo, hi)
    any_valid = False
    for window, doci_map in sorted(maps.items()):
        raster_write(out / f"doci{window:02d}.docr", doci_map.values.astype(np.float32))
        raster_write(out / f"valid{window:02d}.docr", doci_map.valid)
        rgb = render_heatmap(
            doci_map,
            args.palette,
            vmin=None if vrange is None else vrange[0],
            vmax=None if vrange is None else vrange[1],
        )
        (out / f"doci{window:02d}.png").write_bytes(png_bytes(rgb))
        any_valid = any_valid or bool(doci_map.valid.any())
    if not any_valid:
        _warn({"code": "all_invalid", "message": "every pixel fell below the validity floor"})
    _emit({"maps": str(out), "windows": sorted(maps), "all_invalid": not any_valid})
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    loaded = read_stack(args.stack)
    windows = parse_channels(args.channels)
    roi_cfg = {}
    if args.train:
        roi_cfg = json.loads(Path(args.train).read_text())
    run = workflows.classify_stack(
        loaded,
        windows,
        lam=args.ridge,
        rois_per_class=roi_cfg.get("rois_per_class", 8),
        roi_px=roi_cfg.get("roi_px", 8),
        seed=roi_cfg.get("seed", args.seed),
        block_size_mm=args.block_mm,
        mode=args.mode,
    )
    out = _out_path(args.out, "prediction")
    out.mkdir(parents=True, exist_ok=True)
    raster_write(out / "predicted.docr", run.prediction.predicted)
    raster_write(out / "evaluated.docr", run.prediction.evaluated)
    (out / "overlay.png").write_bytes(png_bytes(run.overlay_rgb))
    report = workflows.metrics_row_json(run.metrics)
    (out / "metrics.json").write_text(json.dumps(report, indent=2))
    _emit({"prediction": str(out), **report})
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    loaded = read_stack(args.stack)
    sizes = [int(tok) for tok in args.sizes.split(",")]
    rows = workflows.sweep_stack(
        loaded,
        sizes,
        lam=args.ridge,
        seed=args.seed,
        block_size_mm=args.block_mm,
        mode=args.mode,
        max_workers=args.workers,
    )
    out = _out_path(args.out, "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(workflows.metrics_csv(rows))
    best = workflows.metrics_row_json(rows[0])
    _emit({"table": str(out), "rows": len(rows), "best": best})
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    taus = np.arange(args.tau_min, args.tau_max + 1e-9, args.tau_step)
    if args.target is not None:
        fall_tau, fit = characterize.tune_fall_tau(
            args.target, gate_width_ns=args.width, lifetimes_ns=taus
        )
    else:
        fall_tau = args.fall_tau
        fit = characterize.linearity_fit(PumpPulse(fall_tau_ns=fall_tau), args.width, taus)
    out = _out_path(args.out, "calibration")
    out.mkdir(parents=True, exist_ok=True)
    csv_lines = ["tau_ns,value"] + [f"{t:.6g},{v:.8f}" for t, v in zip(fit.lifetimes_ns, fit.values)]
    (out / "calibration.csv").write_text("\n".join(csv_lines) + "\n")
    report = {
        "gate_width_ns": fit.gate_width_ns,
        "fall_tau_ns": fall_tau,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "inv_slope_ns": fit.inv_slope,
    }
    (out / "calibration.json").write_text(json.dumps(report, indent=2))
    _plot_calibration(out / "calibration.png", fit)
    _emit({"calibration": str(out), **{k: round(v, 6) for k, v in report.items()}})
    return 0


def _plot_calibration(path: Path, fit) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    taus = np.asarray(fit.lifetimes_ns)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(taus, fit.values, s=8, label="gated ratio")
    ax.plot(taus, fit.slope * taus + fit.intercept, "r-", lw=1, label=f"fit, 1/k = {fit.inv_slope:.2f} ns")
    ax.set_xlabel("lifetime (ns)")
    ax.set_ylabel("ratio value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_resolve(args: argparse.Namespace) -> int:
    from .camera import NoiseConfig, default_acquisition, expected_triplet
    from .phantom import make_usaf_phantom
    from .pipeline import compute_doci, default_floor

    phantom = make_usaf_phantom(args.size, args.size, finest_bar_um=args.finest_um)
    cfg = default_acquisition(noise=NoiseConfig(shot_noise=False), psf_sigma_px=args.psf_sigma)
    trip = expected_triplet(
        phantom, cfg.channels[0], cfg.pulse, cfg.gate, noise=cfg.noise, psf_sigma_px=args.psf_sigma
    )
    doci_map = compute_doci(trip, default_floor(trip))
    report = characterize.spatial_resolution(doci_map, trip.reference, phantom, criterion=args.criterion)
    out = _out_path(args.out, "resolution")
    out.mkdir(parents=True, exist_ok=True)
    lines = ["spacing_um,bar_px,intensity_contrast,doci_contrast,doci_spread,resolved"]
    for g in report.groups:
        lines.append(
            f"{g.spacing_um:.6g},{g.bar_px},{g.intensity_contrast:.6f},{g.doci_contrast:.6f},"
            f"{g.doci_spread:.3e},{int(g.resolved)}"
        )
    (out / "contrast.csv").write_text("\n".join(lines) + "\n")
    summary = {
        "finest_resolved_spacing_um": report.finest_resolved_spacing_um,
        "criterion_contrast": report.criterion_contrast,
        "psf_sigma_px": args.psf_sigma,
    }
    (out / "resolution.json").write_text(json.dumps(summary, indent=2))
    (out / "doci.png").write_bytes(png_bytes(render_heatmap(doci_map)))
    (out / "intensity.png").write_bytes(gray_png_bytes(trip.reference))
    _plot_contrast(out / "contrast.png", report)
    _emit({"resolution": str(out), **summary})
    return 0


def _plot_contrast(path: Path, report) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spacings = [g.spacing_um for g in report.groups]
    contrasts = [g.intensity_contrast for g in report.groups]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(spacings, contrasts, "o-")
    ax.axhline(report.criterion_contrast, color="r", ls="--", lw=1)
    ax.set_xlabel("bar spacing (um)")
    ax.set_ylabel("Michelson contrast")
    ax.set_xscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_surface(args: argparse.Namespace) -> int:
    taus = np.arange(*(float(t) for t in args.taus.split(":")))
    widths = [float(t) for t in args.widths.split(",")]
    pulse = PumpPulse(fall_tau_ns=args.fall_tau)
    surf = doci_surface(pulse, taus, widths)
    out = _out_path(args.out, "surface.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    header = "tau_ns," + ",".join(f"{w:g}" for w in widths)
    lines = [header]
    for tau, row in zip(taus, surf):
        lines.append(f"{tau:.6g}," + ",".join(f"{v:.8f}" for v in row))
    out.write_text("\n".join(lines) + "\n")
    _emit({"surface": str(out), "lifetimes": len(taus), "widths": widths})
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import InstrumentService

    if args.phantom:
        phantom, config = specio.load_phantom_spec(args.phantom)
    else:
        phantom, config = specio.load_phantom_spec({"kind": "tissue"})
    service = InstrumentService(
        phantom,
        config,
        data_dir=_data_dir(),
        host=args.host,
        port=args.port,
        long_poll_timeout_s=args.poll_timeout,
        frame_interval_s=2.0 if args.realtime else args.frame_interval,
        static_dir=args.static_dir,
    )
    service.start()
    _warn({"code": "serving", "message": f"instrument service on {args.host}:{service.port}"})
    try:
        service.wait()
    except KeyboardInterrupt:
        service.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docisim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="acquire a channel stack over a phantom spec")
    p.add_argument("--phantom", required=True, help="phantom spec JSON")
    p.add_argument("--config", help="acquisition override JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output stack directory")
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("doci", help="compute ratio maps and heatmaps from a stack")
    p.add_argument("--stack", required=True)
    p.add_argument("--out")
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--palette", default="doci")
    p.add_argument("--fixed-range", default=None, help="lo,hi fixed normalization")
    p.set_defaults(func=cmd_doci)

    p = sub.add_parser("classify", help="train, predict and evaluate one channel subset")
    p.add_argument("--stack", required=True)
    p.add_argument("--channels", required=True, help='e.g. "[6 8 10]"')
    p.add_argument("--train", help="training ROI config JSON")
    p.add_argument("--out")
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-mm", type=float, default=0.65)
    p.add_argument("--mode", choices=["resubstitution", "heldout"], default="resubstitution")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="evaluate every channel combination of the given sizes")
    p.add_argument("--stack", required=True)
    p.add_argument("--sizes", default="1,2,3,9")
    p.add_argument("--out")
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-mm", type=float, default=0.65)
    p.add_argument("--mode", choices=["resubstitution", "heldout"], default="resubstitution")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="linearity fit of ratio vs lifetime")
    p.add_argument("--width", type=float, default=20.0)
    p.add_argument("--fall-tau", type=float, default=1.0)
    p.add_argument("--target", type=float, default=None, help="bisect fall tau to this 1/k")
    p.add_argument("--tau-min", type=float, default=0.1)
    p.add_argument("--tau-max", type=float, default=6.0)
    p.add_argument("--tau-step", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("resolve", help="bar-target spatial resolution report")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--finest-um", type=float, default=70.0)
    p.add_argument("--psf-sigma", type=float, default=1.0)
    p.add_argument("--criterion", type=float, default=0.26)
    p.add_argument("--out")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("surface", help="export the ratio surface over lifetimes and widths")
    p.add_argument("--taus", default="0.1:6.05:0.1", help="start:stop:step")
    p.add_argument("--widths", default="10,20,30,40")
    p.add_argument("--fall-tau", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("serve", help="run the instrument HTTP service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--phantom", help="phantom spec JSON (default tissue phantom)")
    p.add_argument("--poll-timeout", type=float, default=30.0)
    p.add_argument("--frame-interval", type=float, default=0.25)
    p.add_argument("--realtime", action="store_true", help="pace frames at 2 s like the bench system")
    p.add_argument("--static-dir", default=None, help="serve the operator console from this directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DociError as exc:
        _warn(exc.to_json())
        return 2
    except FileNotFoundError as exc:
        _warn({"code": "not_found", "message": str(exc)})
        return 2
    except (ValueError, KeyError) as exc:
        _warn({"code": "invalid_input", "message": str(exc)})
        return 2


if __name__ == "__main__":
    sys.exit(main())
