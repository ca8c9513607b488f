"""CPI prediction: feature assembly, boosted regression trees, explanations."""

from .features import (
    FeatureSchema,
    FeatureVector,
    JUNK_FEATURE_NAMES,
    UnknownAsset,
    assemble_features,
    build_schema,
)
from .gbdt import (
    GBDTModel,
    GbdtParams,
    NonFiniteTarget,
    RegressionTree,
    SchemaMismatch,
    TooFewRows,
    ZeroVariance,
    eval_metrics,
    find_best_split,
    fit_gbdt,
    predict,
    split_by_id_hash,
)
from .explain import PDPCurve, feature_importance, junk_baseline_features, pdp

__all__ = [
    "FeatureSchema",
    "FeatureVector",
    "JUNK_FEATURE_NAMES",
    "SchemaMismatch",
    "UnknownAsset",
    "assemble_features",
    "build_schema",
    "GBDTModel",
    "GbdtParams",
    "NonFiniteTarget",
    "RegressionTree",
    "TooFewRows",
    "ZeroVariance",
    "eval_metrics",
    "find_best_split",
    "fit_gbdt",
    "predict",
    "split_by_id_hash",
    "PDPCurve",
    "feature_importance",
    "junk_baseline_features",
    "pdp",
]
