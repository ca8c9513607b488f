"""Feature-matrix assembly: topics, acoustics, ad context, junk pixels.

Column order is fixed by the schema: topic indicators first, then the
acoustic scalars, then one-hot ad-context categoricals, then the junk
pixel block. The schema (categorical levels included) is built once
from the training split; categorical levels never seen in training map
to an explicit "other" column at inference.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..acoustic import AcousticFeatures
from ..ingest import AD_CONTEXT_FIELDS
from .gbdt import PredictorError, SchemaMismatch

OTHER_LEVEL = "__other__"

JUNK_FEATURE_NAMES = (
    "junk_mean",
    "junk_std",
    "junk_min",
    "junk_max",
    "junk_first",
    "junk_last",
    "junk_max_abs_diff",
    "junk_slope",
)


class UnknownAsset(PredictorError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    """Immutable column layout shared by training and inference."""

    topic_count: int
    categorical_levels: tuple[tuple[str, tuple[str, ...]], ...]
    include_junk: bool

    @property
    def schema_id(self) -> str:
        canonical = json.dumps(
            {
                "topic_count": self.topic_count,
                "acoustic": list(AcousticFeatures.SCALAR_FIELDS),
                "categorical": [[f, list(levels)] for f, levels in self.categorical_levels],
                "include_junk": self.include_junk,
            },
            sort_keys=True,
        )
        return hashlib.blake2b(canonical.encode("utf-8"), digest_size=8).hexdigest()

    @property
    def column_names(self) -> list[str]:
        names = [f"topic_{i}" for i in range(self.topic_count)]
        names.extend(AcousticFeatures.SCALAR_FIELDS)
        for fieldname, levels in self.categorical_levels:
            names.extend(f"{fieldname}={level}" for level in levels)
            names.append(f"{fieldname}={OTHER_LEVEL}")
        if self.include_junk:
            names.extend(JUNK_FEATURE_NAMES)
        return names

    @property
    def n_columns(self) -> int:
        return len(self.column_names)

    def to_payload(self) -> dict:
        return {
            "topic_count": self.topic_count,
            "categorical_levels": [[f, list(levels)] for f, levels in self.categorical_levels],
            "include_junk": self.include_junk,
            "schema_id": self.schema_id,
            "column_names": self.column_names,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "FeatureSchema":
        return cls(
            topic_count=payload["topic_count"],
            categorical_levels=tuple(
                (f, tuple(levels)) for f, levels in payload["categorical_levels"]
            ),
            include_junk=payload["include_junk"],
        )


@dataclass
class FeatureVector:
    asset_id: str
    values: np.ndarray
    missing_mask: np.ndarray
    schema_id: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "asset_id": self.asset_id,
                "values": [float(v) for v in self.values],
                "mask": [bool(m) for m in self.missing_mask],
                "schema_id": self.schema_id,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, raw: str) -> "FeatureVector":
        payload = json.loads(raw)
        return cls(
            asset_id=payload["asset_id"],
            values=np.array(payload["values"], dtype=np.float64),
            missing_mask=np.array(payload["mask"], dtype=bool),
            schema_id=payload["schema_id"],
        )


def build_schema(
    topic_count: int,
    train_ad_contexts: Sequence[Mapping[str, str]],
    include_junk: bool,
) -> FeatureSchema:
    """Derive the categorical levels (and so the layout) from training data."""
    levels: list[tuple[str, tuple[str, ...]]] = []
    for fieldname in AD_CONTEXT_FIELDS:
        seen = sorted({ctx[fieldname] for ctx in train_ad_contexts if fieldname in ctx})
        levels.append((fieldname, tuple(seen)))
    return FeatureSchema(
        topic_count=topic_count,
        categorical_levels=tuple(levels),
        include_junk=include_junk,
    )


def assemble_features(
    schema: FeatureSchema,
    asset_ids: Sequence[str],
    topic_ids: Mapping[str, int],
    acoustics: Mapping[str, AcousticFeatures],
    ad_contexts: Mapping[str, Mapping[str, str]],
    junk: Optional[Mapping[str, np.ndarray]] = None,
) -> tuple[np.ndarray, np.ndarray, list[FeatureVector]]:
    """Rows for the given assets in schema column order.

    Returns the value matrix, the missing mask, and per-asset records.

    Raises:
        UnknownAsset: an asset id has no topic/acoustic/context entry.
        SchemaMismatch: junk expected but absent (or vice versa), or a
            topic id outside the schema's topic count.
    """
    if schema.include_junk and junk is None:
        raise SchemaMismatch("schema includes the junk block but no junk features given")
    if not schema.include_junk and junk is not None:
        raise SchemaMismatch("junk features given but the schema has no junk block")

    n_cols = schema.n_columns
    rows = np.zeros((len(asset_ids), n_cols))
    mask = np.zeros((len(asset_ids), n_cols), dtype=bool)
    records: list[FeatureVector] = []
    for r, asset_id in enumerate(asset_ids):
        for source, name in ((topic_ids, "topic"), (acoustics, "acoustic"), (ad_contexts, "ad context")):
            if asset_id not in source:
                raise UnknownAsset(f"asset {asset_id!r} has no {name} entry")
        col = 0

        topic = int(topic_ids[asset_id])
        if not 0 <= topic < schema.topic_count:
            raise SchemaMismatch(f"topic id {topic} outside schema topic count {schema.topic_count}")
        rows[r, col + topic] = 1.0
        col += schema.topic_count

        feats = acoustics[asset_id]
        for fieldname in AcousticFeatures.SCALAR_FIELDS:
            value = getattr(feats, fieldname)
            if value is None:
                mask[r, col] = True
            else:
                rows[r, col] = float(value)
            col += 1

        context = ad_contexts[asset_id]
        for fieldname, levels in schema.categorical_levels:
            group_width = len(levels) + 1
            value = context.get(fieldname)
            if value is None:
                mask[r, col : col + group_width] = True
            elif value in levels:
                rows[r, col + levels.index(value)] = 1.0
            else:
                rows[r, col + group_width - 1] = 1.0
            col += group_width

        if schema.include_junk:
            if asset_id not in junk:
                raise UnknownAsset(f"asset {asset_id!r} has no junk entry")
            block = np.asarray(junk[asset_id], dtype=np.float64)
            if block.shape != (len(JUNK_FEATURE_NAMES),):
                raise SchemaMismatch(
                    f"junk block for {asset_id!r} has shape {block.shape}"
                )
            rows[r, col : col + len(JUNK_FEATURE_NAMES)] = block
            col += len(JUNK_FEATURE_NAMES)

        records.append(
            FeatureVector(
                asset_id=asset_id,
                values=rows[r].copy(),
                missing_mask=mask[r].copy(),
                schema_id=schema.schema_id,
            )
        )
    return rows, mask, records
