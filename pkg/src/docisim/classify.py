"""Two-class linear discriminant on multi-channel ratio features, plus the
block-level margin evaluation protocol.

Cancer is always the positive class; every benign tissue class (including
the corkboard that may appear in training ROIs) is merged into the
negative class.  Pixel predictions are resampled onto square blocks
(default 0.65 mm): a block is true cancer if any annotated cancer pixel
falls in it, and predicted cancer if any predicted-cancer pixel does.
Blocks with no tissue pixels are excluded from evaluation.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BlockSetMismatch,
    MissingChannel,
    MissingClass,
    ShapeMismatch,
    SingularCovariance,
    UndefinedMetric,
)
from .phantom import WINDOWS
from .pipeline import DociMap

ALL_WINDOWS = WINDOWS  # (2, ..., 10)


@dataclass(frozen=True)
class FeatureMatrix:
    """Sampled pixel features: one row per pixel, one column per channel
    window, binary labels with cancer = 1."""

    features: np.ndarray
    labels: np.ndarray
    channel_windows: tuple[int, ...]

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.labels).astype(int))
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ShapeMismatch("features must be (rows, channels) with one label per row")
        if X.shape[1] != len(self.channel_windows):
            raise ShapeMismatch("one column per channel window required")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "channel_windows", tuple(self.channel_windows))

    def select(self, windows: Sequence[int]) -> "FeatureMatrix":
        cols = [self.channel_windows.index(w) for w in windows]
        return FeatureMatrix(self.features[:, cols], self.labels, tuple(windows))


@dataclass(frozen=True)
class LdaModel:
    class_means: np.ndarray          # (2, d): row 0 negative, row 1 positive
    pooled_covariance: np.ndarray    # (d, d)
    priors: np.ndarray               # (2,)
    weight_vector: np.ndarray        # (d,)
    bias: float
    regularization_lambda: float
    channel_windows: tuple[int, ...]

    def scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weight_vector + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Positive (cancer) iff the linear score is strictly above zero;
        exact ties go to benign."""
        return self.scores(X) > 0.0


def train_lda(features: FeatureMatrix, lam: float = 1e-6) -> LdaModel:
    """Fit class means and pooled within-class covariance, regularized as
    cov + lam * trace(cov)/d * I; empirical priors.

    Raises MissingClass unless both classes contribute at least two rows,
    SingularCovariance when the (regularized) covariance cannot be solved.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X, y = features.features, features.labels
    pos, neg = X[y == 1], X[y == 0]
    if len(pos) < 2 or len(neg) < 2:
        raise MissingClass("need at least two rows per class")
    d = X.shape[1]
    mu_pos = pos.mean(axis=0)
    mu_neg = neg.mean(axis=0)
    scatter = (pos - mu_pos).T @ (pos - mu_pos) + (neg - mu_neg).T @ (neg - mu_neg)
    cov = scatter / (len(pos) + len(neg) - 2)
    cov = 0.5 * (cov + cov.T)
    ridge = lam * np.trace(cov) / d if np.trace(cov) > 0 else lam
    cov_reg = cov + ridge * np.eye(d)
    try:
        weight = np.linalg.solve(cov_reg, mu_pos - mu_neg)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    if not np.all(np.isfinite(weight)):
        raise SingularCovariance("covariance solve produced non-finite weights")
    n_pos, n_neg = len(pos), len(neg)
    priors = np.array([n_neg, n_pos], dtype=float) / (n_pos + n_neg)
    bias = -0.5 * float((mu_pos + mu_neg) @ weight) + float(np.log(priors[1] / priors[0]))
    return LdaModel(
        class_means=np.stack([mu_neg, mu_pos]),
        pooled_covariance=cov,
        priors=priors,
        weight_vector=weight,
        bias=bias,
        regularization_lambda=lam,
        channel_windows=features.channel_windows,
    )


@dataclass(frozen=True)
class PredictionMap:
    """Pixel predictions plus the mask of pixels that could be predicted
    (valid in every selected channel)."""

    predicted: np.ndarray
    evaluated: np.ndarray
    channel_windows: tuple[int, ...]


def predict_map(model: LdaModel, maps: Mapping[int, DociMap], windows: Sequence[int] | None = None) -> PredictionMap:
    """Apply the discriminant per pixel.  A pixel is predicted only where
    every selected channel is valid; other pixels are marked unpredicted."""
    windows = tuple(windows) if windows is not None else model.channel_windows
    if tuple(windows) != model.channel_windows:
        raise ValueError("requested windows must match the trained model")
    try:
        stack = [maps[w] for w in windows]
    except KeyError as exc:
        raise MissingChannel(f"window {exc.args[0]} missing from stack") from exc
    shape = stack[0].values.shape
    evaluated = np.ones(shape, dtype=bool)
    for m in stack:
        if m.values.shape != shape:
            raise ShapeMismatch("all channel maps must share dimensions")
        evaluated &= m.valid
    X = np.stack([m.values for m in stack], axis=-1).reshape(-1, len(windows))
    predicted = model.predict(X).reshape(shape) & evaluated
    return PredictionMap(predicted=predicted, evaluated=evaluated, channel_windows=tuple(windows))


@dataclass(frozen=True)
class BlockGrid:
    """Square resampling grid over the pixel raster."""

    block_size_mm: float
    pixel_pitch_mm: float
    width_px: int
    height_px: int

    def __post_init__(self) -> None:
        if self.block_size_mm <= 0 or self.pixel_pitch_mm <= 0:
            raise ValueError("block size and pixel pitch must be positive")

    @classmethod
    def for_raster(cls, shape: tuple[int, int], pixel_pitch_mm: float, block_size_mm: float = 0.65) -> "BlockGrid":
        return cls(block_size_mm, pixel_pitch_mm, width_px=shape[1], height_px=shape[0])

    @property
    def blocks_x(self) -> int:
        return int(np.floor((self.width_px - 1) * self.pixel_pitch_mm / self.block_size_mm)) + 1

    @property
    def blocks_y(self) -> int:
        return int(np.floor((self.height_px - 1) * self.pixel_pitch_mm / self.block_size_mm)) + 1

    def block_index(self) -> np.ndarray:
        """Flat block id per pixel; every in-bounds pixel maps to exactly one."""
        px = np.arange(self.width_px)
        py = np.arange(self.height_px)
        bx = np.floor(px * self.pixel_pitch_mm / self.block_size_mm).astype(int)
        by = np.floor(py * self.pixel_pitch_mm / self.block_size_mm).astype(int)
        return by[:, None] * self.blocks_x + bx[None, :]


@dataclass(frozen=True)
class BlockSummary:
    """Per-block any-true reduction over the included block set."""

    ids: np.ndarray    # sorted flat block ids with >= 1 tissue pixel
    flags: np.ndarray  # same length; True when any member pixel was True

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=int))
        object.__setattr__(self, "flags", np.asarray(self.flags, dtype=bool))


def blockify(values: np.ndarray, grid: BlockGrid, tissue_mask: np.ndarray) -> BlockSummary:
    """OR-reduce a boolean pixel raster onto the grid.

    Only blocks containing at least one tissue pixel are included; a block
    is flagged when any of its pixels (tissue or not) is True in `values`.
    """
    values = np.asarray(values, dtype=bool)
    tissue_mask = np.asarray(tissue_mask, dtype=bool)
    if values.shape != (grid.height_px, grid.width_px) or tissue_mask.shape != values.shape:
        raise ShapeMismatch("raster shape does not match the block grid")
    idx = grid.block_index()
    n_blocks = grid.blocks_x * grid.blocks_y
    tissue_counts = np.bincount(idx[tissue_mask].ravel(), minlength=n_blocks)
    true_counts = np.bincount(idx[values].ravel(), minlength=n_blocks)
    included = np.flatnonzero(tissue_counts > 0)
    return BlockSummary(ids=included, flags=true_counts[included] > 0)


@dataclass(frozen=True)
class ConfusionCounts:
    tn: int
    fn: int
    tp: int
    fp: int

    @property
    def total(self) -> int:
        return self.tn + self.fn + self.tp + self.fp


def confusion(truth: BlockSummary, predicted: BlockSummary) -> ConfusionCounts:
    """Block-level confusion counts; the two summaries must cover the same
    included block set."""
    if truth.ids.shape != predicted.ids.shape or not np.array_equal(truth.ids, predicted.ids):
        raise BlockSetMismatch("truth and prediction must cover identical block sets")
    t, p = truth.flags, predicted.flags
    return ConfusionCounts(
        tn=int(np.sum(~t & ~p)),
        fn=int(np.sum(t & ~p)),
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
    )


@dataclass(frozen=True)
class MetricsRow:
    channels: tuple[int, ...]
    counts: ConfusionCounts
    sensitivity: float
    specificity: float
    accuracy: float
    mode: str | None = None

    @property
    def channel_label(self) -> str:
        return format_channels(self.channels)


def metrics(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(sensitivity, specificity, accuracy).  A zero denominator raises
    UndefinedMetric rather than reporting 0."""
    if counts.tp + counts.fn == 0:
        raise UndefinedMetric("no true-cancer blocks: sensitivity undefined")
    if counts.tn + counts.fp == 0:
        raise UndefinedMetric("no true-benign blocks: specificity undefined")
    sens = counts.tp / (counts.tp + counts.fn)
    spec = counts.tn / (counts.tn + counts.fp)
    acc = (counts.tn + counts.tp) / counts.total
    return sens, spec, acc


def metrics_row(channels: Sequence[int], counts: ConfusionCounts, mode: str | None = None) -> MetricsRow:
    sens, spec, acc = metrics(counts)
    return MetricsRow(tuple(channels), counts, sensitivity=sens, specificity=spec, accuracy=acc, mode=mode)


def format_channels(windows: Sequence[int]) -> str:
    """Bracket notation: "[6 8 10]" for subsets, "[2 - 10]" for the full
    contiguous nine-window set."""
    ws = tuple(windows)
    if ws == ALL_WINDOWS:
        return "[2 - 10]"
    return "[" + " ".join(str(w) for w in ws) + "]"


def parse_channels(text: str) -> tuple[int, ...]:
    body = text.strip().strip("[]").strip()
    if "-" in body:
        lo, hi = (int(part) for part in body.split("-"))
        return tuple(range(lo, hi + 1))
    return tuple(int(tok) for tok in body.split())


def sample_training_matrix(
    maps: Mapping[int, DociMap],
    label_map: np.ndarray,
    *,
    cancer_label: int,
    class_labels: Sequence[int] | None = None,
    rois_per_class: int = 8,
    roi_px: int = 8,
    seed: int = 0,
    region_mask: np.ndarray | None = None,
    max_tries: int = 4000,
) -> FeatureMatrix:
    """Draw small single-class ROIs per label and collect their pixels as
    training rows over all nine windows.

    Every sampled ROI is homogeneous in `label_map`, fully valid in every
    channel, and (when `region_mask` is given) fully inside that mask, so
    held-out evaluation can keep its region untouched.
    """
    windows = sorted(maps)
    stack = np.stack([maps[w].values for w in windows], axis=-1)
    valid = np.logical_and.reduce([maps[w].valid for w in windows])
    if class_labels is None:
        class_labels = sorted(int(v) for v in np.unique(label_map))
    rng = np.random.default_rng(seed)
    h, w = label_map.shape
    rows, labels = [], []
    for label in class_labels:
        found = 0
        tries = 0
        while found < rois_per_class and tries < max_tries:
            tries += 1
            y = int(rng.integers(0, h - roi_px))
            x = int(rng.integers(0, w - roi_px))
            patch_labels = label_map[y : y + roi_px, x : x + roi_px]
            if not np.all(patch_labels == label):
                continue
            if not np.all(valid[y : y + roi_px, x : x + roi_px]):
                continue
            if region_mask is not None and not np.all(region_mask[y : y + roi_px, x : x + roi_px]):
                continue
            rows.append(stack[y : y + roi_px, x : x + roi_px].reshape(-1, len(windows)))
            labels.append(np.full(roi_px * roi_px, 1 if label == cancer_label else 0))
            found += 1
        if found == 0:
            raise MissingClass(f"could not sample any ROI for class {label}")
    X = np.concatenate(rows, axis=0)
    y = np.concatenate(labels)
    return FeatureMatrix(features=X, labels=y, channel_windows=tuple(windows))


def channel_sweep(
    maps: Mapping[int, DociMap],
    cancer_truth: np.ndarray,
    tissue_mask: np.ndarray,
    grid: BlockGrid,
    training: FeatureMatrix,
    *,
    sizes: Sequence[int],
    lam: float = 1e-6,
    mode: str = "resubstitution",
    eval_mask: np.ndarray | None = None,
    max_workers: int | None = None,
) -> list[MetricsRow]:
    """Train and evaluate every channel subset of each requested size.

    The same training rows feed every subset (columns selected per
    combination).  Rows come back sorted by accuracy descending, ties
    broken by ascending channel tuple.  `eval_mask`, when given, keeps only
    blocks with tissue pixels inside it (held-out region mode).
    """
    windows = training.channel_windows
    if eval_mask is not None:
        tissue_mask = tissue_mask & eval_mask
    truth_blocks = blockify(np.asarray(cancer_truth, bool) & tissue_mask, grid, tissue_mask)

    subsets: list[tuple[int, ...]] = []
    for size in sizes:
        if not 1 <= size <= len(windows):
            raise ValueError(f"subset size {size} out of range")
        subsets.extend(itertools.combinations(windows, size))

    def evaluate(subset: tuple[int, ...]) -> MetricsRow:
        model = train_lda(training.select(subset), lam)
        pred = predict_map(model, maps, subset)
        pred_blocks = blockify(pred.predicted & tissue_mask, grid, tissue_mask)
        counts = confusion(truth_blocks, pred_blocks)
        return metrics_row(subset, counts, mode=mode)

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(evaluate, subsets))
    else:
        results = [evaluate(s) for s in subsets]
    results.sort(key=lambda r: (-r.accuracy, r.channels))
    return results
