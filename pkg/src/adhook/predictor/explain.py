"""Model explanations: gain importance, partial dependence, junk baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ingest import EmptyFrameSequence, Frame
from ..sampler import to_gray
from .gbdt import GBDTModel, LEAF, predict


@dataclass(eq=False)
class PDPCurve:
    """Average prediction as one feature sweeps a grid."""

    feature_index: int
    grid: np.ndarray
    values: np.ndarray
    n_background: int


def feature_importance(model: GBDTModel) -> np.ndarray:
    """Per-feature split gains accumulated over the ensemble, normalized
    to sum to one; all zeros when no tree ever split."""
    totals = np.zeros(model.n_features)
    for tree in model.trees:
        internal = tree.feature != LEAF
        np.add.at(totals, tree.feature[internal], tree.gain[internal])
    total = float(totals.sum())
    if total <= 0.0:
        return totals
    return totals / total


def pdp(
    model: GBDTModel,
    X_background: np.ndarray,
    feature_index: int,
    n_grid: int = 20,
    mask_background: np.ndarray | None = None,
) -> PDPCurve:
    """Partial dependence of the model on one feature.

    The grid spans the 1st to 99th percentile of the feature in the
    background (binary indicator features get the grid {0, 1}); the
    value at each grid point is the mean prediction over background rows
    with the feature forced to that point.
    """
    X_background = np.asarray(X_background, dtype=np.float64)
    if X_background.shape[0] == 0:
        raise ValueError("background matrix must be non-empty")
    if mask_background is None:
        mask_background = np.zeros(X_background.shape, dtype=bool)
    mask_background = np.asarray(mask_background, dtype=bool)

    present = X_background[~mask_background[:, feature_index], feature_index]
    if len(present) == 0:
        grid = np.array([0.0])
    elif np.all(np.isin(present, (0.0, 1.0))):
        grid = np.array([0.0, 1.0])
    else:
        lo = float(np.percentile(present, 1))
        hi = float(np.percentile(present, 99))
        grid = np.array([lo]) if lo == hi else np.linspace(lo, hi, n_grid)

    n_bg = X_background.shape[0]
    tiled = np.repeat(X_background, len(grid), axis=0)
    tiled_mask = np.repeat(mask_background, len(grid), axis=0)
    tiled[:, feature_index] = np.tile(grid, n_bg)
    tiled_mask[:, feature_index] = False
    predictions = predict(model, tiled, tiled_mask).reshape(n_bg, len(grid))
    return PDPCurve(
        feature_index=feature_index,
        grid=grid,
        values=predictions.mean(axis=0),
        n_background=n_bg,
    )


def junk_baseline_features(frames: list[Frame]) -> np.ndarray:
    """Eight aggregates of the per-frame mean luma: mean, std, min, max,
    first, last, largest absolute frame-to-frame change, and linear
    trend slope."""
    if not frames:
        raise EmptyFrameSequence("junk features need at least one frame")
    means = np.array([to_gray(frame).luma.mean() for frame in frames])
    if len(means) > 1:
        max_abs_diff = float(np.max(np.abs(np.diff(means))))
        slope = float(np.polyfit(np.arange(len(means)), means, 1)[0])
    else:
        max_abs_diff = 0.0
        slope = 0.0
    return np.array(
        [
            float(means.mean()),
            float(means.std()),
            float(means.min()),
            float(means.max()),
            float(means[0]),
            float(means[-1]),
            max_abs_diff,
            slope,
        ]
    )
