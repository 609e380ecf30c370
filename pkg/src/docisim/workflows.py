"""High-level runs shared by the CLI and the instrument service."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import binary_erosion

from .classify import (
    BlockGrid,
    BlockSummary,
    LdaModel,
    MetricsRow,
    PredictionMap,
    blockify,
    channel_sweep,
    confusion,
    metrics_row,
    predict_map,
    sample_training_matrix,
    train_lda,
)
from .errors import DociError
from .phantom import LABEL_CANCER
from .pipeline import DociMap, compute_doci, default_floor
from .stackio import LoadedStack

# Fig-style review palette: tissue boundary plus the three error/hit block
# fills.  The operator console must render these exact bytes.
OVERLAY_COLORS = {
    "boundary": (0, 255, 255),   # cyan
    "fn": (0, 0, 255),           # blue: annotated cancer missed
    "fp": (255, 0, 0),           # red: benign predicted cancer
    "tp": (255, 0, 255),         # purple: overlap of annotation and prediction
}


def maps_from_stack(loaded: LoadedStack, *, floor: float | None = None) -> dict[int, DociMap]:
    """Ratio map per window; the validity floor defaults per channel from
    the reference headroom."""
    maps = {}
    for window, trip in loaded.triplets.items():
        f = floor if floor is not None else default_floor(trip)
        maps[window] = compute_doci(trip, f)
    return maps


@dataclass(frozen=True)
class ClassificationRun:
    model: LdaModel
    prediction: PredictionMap
    truth_blocks: BlockSummary
    predicted_blocks: BlockSummary
    metrics: MetricsRow
    grid: BlockGrid
    overlay_rgb: np.ndarray


def classify_stack(
    loaded: LoadedStack,
    windows: Sequence[int],
    *,
    maps: Mapping[int, DociMap] | None = None,
    lam: float = 1e-6,
    rois_per_class: int = 8,
    roi_px: int = 8,
    seed: int = 0,
    block_size_mm: float = 0.65,
    mode: str = "resubstitution",
    cancer_label: int = LABEL_CANCER,
) -> ClassificationRun:
    """Train on ROIs sampled from the archived ground truth, predict the
    full raster, and evaluate with the block protocol."""
    if loaded.label_map is None or loaded.tissue_mask is None:
        raise DociError("stack carries no ground-truth labels; cannot train or evaluate")
    if loaded.pixel_pitch_mm is None:
        raise DociError("stack manifest lacks pixel_pitch_mm")
    maps = dict(maps) if maps is not None else maps_from_stack(loaded)
    label_map = loaded.label_map
    tissue = np.asarray(loaded.tissue_mask, bool)

    region_mask = None
    eval_tissue = tissue
    if mode == "heldout":
        half = label_map.shape[1] // 2
        region_mask = np.zeros_like(tissue)
        region_mask[:, :half] = True
        eval_tissue = tissue & ~region_mask
    elif mode != "resubstitution":
        raise ValueError(f"unknown evaluation mode {mode!r}")

    training = sample_training_matrix(
        maps,
        label_map,
        cancer_label=cancer_label,
        rois_per_class=rois_per_class,
        roi_px=roi_px,
        seed=seed,
        region_mask=region_mask,
    )
    model = train_lda(training.select(tuple(windows)), lam)
    prediction = predict_map(model, maps, tuple(windows))

    grid = BlockGrid.for_raster(label_map.shape, loaded.pixel_pitch_mm, block_size_mm)
    truth_blocks = blockify((label_map == cancer_label) & eval_tissue, grid, eval_tissue)
    predicted_blocks = blockify(prediction.predicted & eval_tissue, grid, eval_tissue)
    row = metrics_row(tuple(windows), confusion(truth_blocks, predicted_blocks), mode=mode)
    overlay = render_overlay(truth_blocks, predicted_blocks, grid, tissue)
    return ClassificationRun(
        model=model,
        prediction=prediction,
        truth_blocks=truth_blocks,
        predicted_blocks=predicted_blocks,
        metrics=row,
        grid=grid,
        overlay_rgb=overlay,
    )


def sweep_stack(
    loaded: LoadedStack,
    sizes: Sequence[int],
    *,
    lam: float = 1e-6,
    rois_per_class: int = 8,
    roi_px: int = 8,
    seed: int = 0,
    block_size_mm: float = 0.65,
    mode: str = "resubstitution",
    max_workers: int | None = None,
) -> list[MetricsRow]:
    if loaded.label_map is None or loaded.tissue_mask is None:
        raise DociError("stack carries no ground-truth labels; cannot sweep")
    maps = maps_from_stack(loaded)
    label_map = loaded.label_map
    tissue = np.asarray(loaded.tissue_mask, bool)
    region_mask = None
    eval_mask = None
    if mode == "heldout":
        half = label_map.shape[1] // 2
        region_mask = np.zeros_like(tissue)
        region_mask[:, :half] = True
        eval_mask = ~region_mask
    training = sample_training_matrix(
        maps,
        label_map,
        cancer_label=LABEL_CANCER,
        rois_per_class=rois_per_class,
        roi_px=roi_px,
        seed=seed,
        region_mask=region_mask,
    )
    grid = BlockGrid.for_raster(label_map.shape, loaded.pixel_pitch_mm, block_size_mm)
    return channel_sweep(
        maps,
        label_map == LABEL_CANCER,
        tissue,
        grid,
        training,
        sizes=sizes,
        lam=lam,
        mode=mode,
        eval_mask=eval_mask,
        max_workers=max_workers,
    )


def render_overlay(
    truth: BlockSummary,
    predicted: BlockSummary,
    grid: BlockGrid,
    tissue_mask: np.ndarray,
) -> np.ndarray:
    """Block-level review image: FN blue, FP red, TP purple fills, tissue
    boundary in cyan, everything else black."""
    rgb = np.zeros((grid.height_px, grid.width_px, 3), dtype=np.uint8)
    idx = grid.block_index()
    flags = {int(b): (bool(t), bool(p)) for b, t, p in zip(truth.ids, truth.flags, predicted.flags)}
    fill = np.zeros(grid.blocks_x * grid.blocks_y + 1, dtype=np.uint8)  # 0 none, 1 fn, 2 fp, 3 tp
    for block, (t, p) in flags.items():
        if t and not p:
            fill[block] = 1
        elif not t and p:
            fill[block] = 2
        elif t and p:
            fill[block] = 3
    codes = fill[idx]
    rgb[codes == 1] = OVERLAY_COLORS["fn"]
    rgb[codes == 2] = OVERLAY_COLORS["fp"]
    rgb[codes == 3] = OVERLAY_COLORS["tp"]

    tissue = np.asarray(tissue_mask, bool)
    boundary = tissue & ~binary_erosion(tissue, border_value=0)
    rgb[boundary] = OVERLAY_COLORS["boundary"]
    return rgb


def metrics_row_json(row: MetricsRow) -> dict:
    return {
        "channels": list(row.channels),
        "channel_label": row.channel_label,
        "tn": row.counts.tn,
        "fn": row.counts.fn,
        "tp": row.counts.tp,
        "fp": row.counts.fp,
        "sensitivity": round(row.sensitivity, 4),
        "specificity": round(row.specificity, 4),
        "accuracy": round(row.accuracy, 4),
        "mode": row.mode,
    }


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    lines = ["Channels,TN,FN,TP,FP,Sensitivity,Specificity,Accuracy,Mode"]
    for r in rows:
        lines.append(
            f'"{r.channel_label}",{r.counts.tn},{r.counts.fn},{r.counts.tp},{r.counts.fp},'
            f"{r.sensitivity:.4f},{r.specificity:.4f},{r.accuracy:.4f},{r.mode or ''}"
        )
    return "\n".join(lines) + "\n"
