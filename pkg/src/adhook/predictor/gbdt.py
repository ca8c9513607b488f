"""Gradient-boosted regression trees with an exact split scan.

Squared-error boosting: each stage fits a binary regression tree to the
current residuals on a seeded row subsample. Splits maximize the
sum-of-squared-error reduction, scanning midpoints between consecutive
distinct sorted feature values; rows whose value is missing always
travel left, during both training and prediction. Histogram binning is
deliberately absent: the data sizes here make the exact scan affordable
and directly checkable against brute force.

Fitting internally reorders rows by a content digest, so permuting the
training rows (with subsample 1.0) cannot change the model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..rng import XorShift64Star, digest64, mix_seed

# Gains at or below this floor never split; keeps constant targets exact.
GAIN_EPS = 1e-12
# Gains within this relative tolerance count as tied; ties resolve to the
# lowest feature index, then the lowest threshold. Without the tolerance,
# mathematically identical partitions reachable through two features
# would be ranked by summation-order noise.
GAIN_TIE_REL = 1e-9

LEAF = -1


class PredictorError(Exception):
    """Base class for predictor failures."""


class SchemaMismatch(PredictorError):
    pass


class TooFewRows(PredictorError):
    pass


class NonFiniteTarget(PredictorError):
    pass


class ZeroVariance(PredictorError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    """Boosting hyperparameters; defaults are the tuned production values."""

    n_trees: int = 740
    max_depth: int = 12
    learning_rate: float = 0.0764
    min_samples_split: int = 50
    subsample: float = 0.86
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_samples_split": self.min_samples_split,
            "subsample": self.subsample,
            "seed": self.seed,
        }


@dataclass(eq=False)
class RegressionTree:
    """Array-encoded binary tree; feature == LEAF marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    def predict(self, X: np.ndarray, mask: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        internal = self.feature[node] != LEAF
        while np.any(internal):
            rows = np.nonzero(internal)[0]
            node_ids = node[rows]
            feats = self.feature[node_ids]
            go_left = mask[rows, feats] | (X[rows, feats] <= self.threshold[node_ids])
            node[rows] = np.where(go_left, self.left[node_ids], self.right[node_ids])
            internal = self.feature[node] != LEAF
        return self.value[node]

    def to_payload(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RegressionTree":
        return cls(
            feature=np.array(payload["feature"], dtype=np.int64),
            threshold=np.array(payload["threshold"], dtype=np.float64),
            left=np.array(payload["left"], dtype=np.int64),
            right=np.array(payload["right"], dtype=np.int64),
            value=np.array(payload["value"], dtype=np.float64),
            gain=np.array(payload["gain"], dtype=np.float64),
        )


@dataclass(eq=False)
class GBDTModel:
    base_prediction: float
    trees: list[RegressionTree]
    params: GbdtParams
    schema_id: str = ""
    n_features: int = 0

    def to_json(self) -> str:
        payload = {
            "format_version": 1,
            "params": self.params.to_dict(),
            "schema_id": self.schema_id,
            "n_features": self.n_features,
            "base_prediction": self.base_prediction,
            "trees": [tree.to_payload() for tree in self.trees],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, raw: str) -> "GBDTModel":
        payload = json.loads(raw)
        return cls(
            base_prediction=payload["base_prediction"],
            trees=[RegressionTree.from_payload(p) for p in payload["trees"]],
            params=GbdtParams(**payload["params"]),
            schema_id=payload["schema_id"],
            n_features=payload["n_features"],
        )


def find_best_split(
    X: np.ndarray,
    residual: np.ndarray,
    mask: np.ndarray,
    rows: np.ndarray,
) -> Optional[tuple[int, float, float]]:
    """Best (feature, threshold, gain) over the given rows, or None.

    Gain is the node's squared-error reduction with missing rows counted
    in the left child. Candidate thresholds are midpoints between
    consecutive distinct present values. Gains within GAIN_TIE_REL of
    each other count as tied and resolve to the lowest feature index,
    then the lowest threshold.
    """
    r_rows = residual[rows]
    sum_total = float(r_rows.sum())
    n_total = len(rows)
    parent_term = sum_total * sum_total / n_total

    best: Optional[tuple[int, float, float]] = None
    for feature in range(X.shape[1]):
        present = rows[~mask[rows, feature]]
        if len(present) < 2:
            continue
        values = X[present, feature]
        order = np.argsort(values, kind="stable")
        sorted_values = values[order]
        boundaries = np.nonzero(sorted_values[:-1] < sorted_values[1:])[0]
        if len(boundaries) == 0:
            continue
        missing_rows = rows[mask[rows, feature]]
        sum_missing = float(residual[missing_rows].sum())
        n_missing = len(missing_rows)

        prefix = np.cumsum(residual[present[order]])
        sum_left = prefix[boundaries] + sum_missing
        n_left = boundaries + 1 + n_missing
        sum_right = sum_total - sum_left
        n_right = n_total - n_left
        gains = sum_left**2 / n_left + sum_right**2 / n_right - parent_term
        top = float(gains.max())
        if top <= GAIN_EPS:
            continue
        tol = GAIN_TIE_REL * max(1.0, top)
        pick = int(np.argmax(gains >= top - tol))  # earliest near-max: lowest threshold
        gain = float(gains[pick])
        threshold = float((sorted_values[boundaries[pick]] + sorted_values[boundaries[pick] + 1]) / 2.0)
        if best is None or gain > best[2] + GAIN_TIE_REL * max(1.0, best[2]):
            best = (feature, threshold, gain)
    return best


def _fit_tree(
    X: np.ndarray,
    residual: np.ndarray,
    mask: np.ndarray,
    rows: np.ndarray,
    params: GbdtParams,
) -> RegressionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    gain: list[float] = []

    def make_leaf(node_rows: np.ndarray) -> int:
        node_id = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(residual[node_rows].mean()))
        gain.append(0.0)
        return node_id

    def build(node_rows: np.ndarray, depth: int) -> int:
        if depth >= params.max_depth or len(node_rows) < params.min_samples_split:
            return make_leaf(node_rows)
        split = find_best_split(X, residual, mask, node_rows)
        if split is None:
            return make_leaf(node_rows)
        split_feature, split_threshold, split_gain = split
        node_id = len(feature)
        feature.append(split_feature)
        threshold.append(split_threshold)
        left.append(0)
        right.append(0)
        value.append(0.0)
        gain.append(split_gain)
        goes_left = mask[node_rows, split_feature] | (
            X[node_rows, split_feature] <= split_threshold
        )
        left[node_id] = build(node_rows[goes_left], depth + 1)
        right[node_id] = build(node_rows[~goes_left], depth + 1)
        return node_id

    build(rows, 0)
    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        gain=np.array(gain, dtype=np.float64),
    )


def _canonical_row_order(X: np.ndarray, y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    digests = np.empty(X.shape[0], dtype=np.uint64)
    for i in range(X.shape[0]):
        h = hashlib.blake2b(digest_size=8)
        h.update(np.ascontiguousarray(X[i]).tobytes())
        h.update(np.ascontiguousarray(mask[i]).tobytes())
        h.update(np.float64(y[i]).tobytes())
        digests[i] = int.from_bytes(h.digest(), "big")
    return np.argsort(digests, kind="stable")


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    params: GbdtParams = GbdtParams(),
    mask: Optional[np.ndarray] = None,
    schema_id: str = "",
) -> GBDTModel:
    """Fit the boosted ensemble.

    Raises:
        TooFewRows: fewer rows than min_samples_split.
        NonFiniteTarget: NaN or infinity in the target.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mask is None:
        mask = np.zeros(X.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if X.shape[0] != len(y):
        raise ValueError(f"X has {X.shape[0]} rows but y has {len(y)}")
    if mask.shape != X.shape:
        raise ValueError(f"mask shape {mask.shape} does not match X {X.shape}")
    if X.shape[0] < params.min_samples_split:
        raise TooFewRows(f"{X.shape[0]} rows < min_samples_split {params.min_samples_split}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteTarget("target contains NaN or infinity")

    order = _canonical_row_order(X, y, mask)
    X_fit = X[order]
    y_fit = y[order]
    mask_fit = mask[order]
    n = X_fit.shape[0]

    base = float(y_fit.mean())
    predictions = np.full(n, base)
    n_sub = int(np.floor(params.subsample * n))
    trees: list[RegressionTree] = []
    for stage in range(params.n_trees):
        residual = y_fit - predictions
        if n_sub < n:
            rng = XorShift64Star(mix_seed(params.seed, stage))
            pool = list(range(n))
            for j in range(n_sub):
                swap = j + rng.randint_below(n - j)
                pool[j], pool[swap] = pool[swap], pool[j]
            rows = np.array(sorted(pool[:n_sub]), dtype=np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        tree = _fit_tree(X_fit, residual, mask_fit, rows, params)
        trees.append(tree)
        predictions = predictions + params.learning_rate * tree.predict(X_fit, mask_fit)
    return GBDTModel(
        base_prediction=base,
        trees=trees,
        params=params,
        schema_id=schema_id,
        n_features=X.shape[1],
    )


def predict(model: GBDTModel, X: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Ensemble prediction: base plus learning_rate times each tree's output."""
    X = np.asarray(X, dtype=np.float64)
    if mask is None:
        mask = np.zeros(X.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if model.n_features and X.shape[1] != model.n_features:
        raise SchemaMismatch(
            f"matrix has {X.shape[1]} features, model expects {model.n_features}"
        )
    out = np.full(X.shape[0], model.base_prediction)
    for tree in model.trees:
        out = out + model.params.learning_rate * tree.predict(X, mask)
    return out


def eval_metrics(y: Sequence[float], y_hat: Sequence[float]) -> dict[str, float]:
    """R-squared and mean squared error.

    Raises:
        ZeroVariance: the target is constant, R-squared is undefined.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if len(y) != len(y_hat) or len(y) < 2:
        raise ValueError("need two equal-length vectors of at least 2 entries")
    ss_res = float(((y - y_hat) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ZeroVariance("target variance is zero")
    return {"r2": 1.0 - ss_res / ss_tot, "mse": ss_res / len(y)}


def split_by_id_hash(
    asset_ids: Sequence[str], seed: int, test_fraction: float = 0.2
) -> tuple[list[int], list[int]]:
    """Deterministic train/test partition keyed by hashing each asset id."""
    train, test = [], []
    for index, asset_id in enumerate(asset_ids):
        u = digest64(f"{seed}:{asset_id}".encode("utf-8")) / 2.0**64
        (test if u < test_fraction else train).append(index)
    return train, test
