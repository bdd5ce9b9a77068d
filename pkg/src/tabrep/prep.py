"""Automated feature recognition and data-quality augmentation.

Two recognizers classify every feature: one separates numerical from
categorical (and date) content, the other separates static from dynamic
features by counting per-customer change statistics over chronologically
ordered records. The augmentation half tokenizes categorical values
(missing included, as its own token), scales numerical values to [0, 1]
and imputes zeros for missing ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import MixedKindFeatureError, SchemaError, TableIOError
from .table import MISSING, BigTable, Date, Number, Token

MISSING_TOKEN_ID = 0
OOV_TOKEN_ID = 1


class FeatureKind(str, Enum):
    STATIC_NUMERICAL = "SN"
    DYNAMIC_NUMERICAL = "DN"
    STATIC_CATEGORICAL = "SC"
    DYNAMIC_CATEGORICAL = "DC"
    DATE_INDEX = "DATE"

    @property
    def is_numerical(self) -> bool:
        return self in (FeatureKind.STATIC_NUMERICAL, FeatureKind.DYNAMIC_NUMERICAL)

    @property
    def is_categorical(self) -> bool:
        return self in (FeatureKind.STATIC_CATEGORICAL, FeatureKind.DYNAMIC_CATEGORICAL)

    @property
    def is_dynamic(self) -> bool:
        return self in (FeatureKind.DYNAMIC_NUMERICAL, FeatureKind.DYNAMIC_CATEGORICAL)


@dataclass(frozen=True)
class RecognizerConfig:
    """Thresholds for both recognizers.

    `feature_threshold` of None means ceil(0.05 * |customers|), resolved
    against the table being profiled. The pair threshold is scale-free for
    numerical features because change statistics are computed on normalized
    values.
    """

    integer_unique_threshold: int = 20
    pair_threshold_categorical: float = 0.0
    pair_threshold_numerical: float = 0.05
    feature_threshold: int | None = None

    def __post_init__(self):
        if self.integer_unique_threshold < 2:
            raise ValueError("integer_unique_threshold must be >= 2")
        if self.pair_threshold_categorical < 0 or self.pair_threshold_numerical < 0:
            raise ValueError("pair thresholds must be non-negative")
        if self.feature_threshold is not None and self.feature_threshold < 1:
            raise ValueError("feature_threshold must be >= 1")

    def pair_threshold(self, kind: str) -> float:
        return self.pair_threshold_categorical if kind == "categorical" else self.pair_threshold_numerical

    def resolved_feature_threshold(self, n_customers: int) -> int:
        if self.feature_threshold is not None:
            return self.feature_threshold
        return max(1, math.ceil(0.05 * n_customers))


def nc_recognize(table: BigTable, config: RecognizerConfig, ignore=()) -> dict[str, str]:
    """Classify each feature as 'numerical', 'categorical' or 'date'.

    Token-only features are categorical, date-only are date, any fractional
    number makes the feature numerical, and all-integer features are
    numerical only when their distinct-value count exceeds the configured
    threshold. Features mixing cell kinds raise; list them in `ignore` (and
    supply an override) to skip recognition.
    """
    if not table.customers:
        raise SchemaError("cannot recognize features of an empty table")
    kinds: dict[str, str] = {}
    for feature in table.features:
        if feature in ignore:
            continue
        seen: set[str] = set()
        values: list[float] = []
        for cell in table.column(feature):
            if cell is MISSING:
                continue
            if isinstance(cell, Token):
                seen.add("token")
            elif isinstance(cell, Number):
                seen.add("number")
                values.append(cell.value)
            elif isinstance(cell, Date):
                seen.add("date")
        if len(seen) > 1:
            raise MixedKindFeatureError(feature, seen)
        if seen == {"token"} or not seen:
            kinds[feature] = "categorical"
        elif seen == {"date"}:
            kinds[feature] = "date"
        elif any(not float(v).is_integer() for v in values):
            kinds[feature] = "numerical"
        else:
            distinct = len(set(values))
            kinds[feature] = "numerical" if distinct > config.integer_unique_threshold else "categorical"
    return kinds


def _canonical_token(cell) -> str:
    """Stable string form used when a non-token cell is treated as a category."""
    if isinstance(cell, Token):
        return cell.value
    if isinstance(cell, Number):
        v = cell.value
        return str(int(v)) if float(v).is_integer() else repr(v)
    if isinstance(cell, Date):
        return str(cell.epoch)
    raise TypeError(f"cannot tokenize {cell!r}")


def numeric_range(table: BigTable, feature: str) -> tuple[float, float]:
    """(min, max) over the feature's non-missing numeric cells; (0, 0) if none."""
    values = [c.value for c in table.column(feature) if isinstance(c, Number)]
    if not values:
        return (0.0, 0.0)
    return (min(values), max(values))


def uniform_normalize(x, stats: tuple[float, float]):
    """Scale into [0, 1] via (x - min) / (max - min), clamped.

    A degenerate constant feature (max == min) maps every value to 0.5 so a
    present value stays distinguishable from the 0.0 used for missing.
    """
    lo, hi = stats
    if hi < lo:
        raise ValueError(f"max < min in normalization stats: {stats}")
    if hi == lo:
        return np.full_like(np.asarray(x, dtype=np.float64), 0.5) if np.ndim(x) else 0.5
    scaled = (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)
    clipped = np.clip(scaled, 0.0, 1.0)
    return clipped if np.ndim(x) else float(clipped)


def impute(values):
    """Replace Missing with 0.0, pass real values through."""
    return [0.0 if v is MISSING else float(v) for v in values]


@dataclass
class Vocabulary:
    """Token -> dense id map with reserved missing (0) and OOV (1) slots."""

    token_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.token_to_id) + 2

    def encode(self, cell) -> int:
        if cell is MISSING:
            return MISSING_TOKEN_ID
        return self.token_to_id.get(_canonical_token(cell), OOV_TOKEN_ID)


def tokenize(values, vocab: Vocabulary | None = None) -> tuple[list[int], Vocabulary]:
    """Map cell values to token ids.

    With no vocabulary (train mode) observed tokens are assigned ids from 2
    in first-seen order. With a vocabulary (apply mode) unseen tokens map to
    the OOV id and missing cells to id 0.
    """
    if vocab is None:
        vocab = Vocabulary()
        for cell in values:
            if cell is MISSING:
                continue
            token = _canonical_token(cell)
            if token not in vocab.token_to_id:
                vocab.token_to_id[token] = 2 + len(vocab.token_to_id)
        values = list(values)
    return [vocab.encode(cell) for cell in values], vocab


def dynamics_statistic(table: BigTable, feature: str, kind: str) -> np.ndarray:
    """Per-customer change statistic over successive ordered records.

    Categorical: count of successive pairs whose values differ, missing
    treated as its own value. Numerical: sum of absolute successive
    differences of normalized values, pairs touching a missing cell skipped.
    Customers with fewer than two records score 0.
    """
    j = table.feature_index(feature)
    column = np.zeros(table.n_customers)
    stats = numeric_range(table, feature) if kind == "numerical" else None
    for i, cust in enumerate(table.customers):
        rows = table.records[cust]
        if len(rows) < 2:
            continue
        total = 0.0
        for prev, cur in zip(rows[:-1], rows[1:]):
            a, b = prev.cells[j], cur.cells[j]
            if kind == "categorical":
                if _cat_value(a) != _cat_value(b):
                    total += 1.0
            else:
                if a is MISSING or b is MISSING:
                    continue
                total += abs(uniform_normalize(b.value, stats) - uniform_normalize(a.value, stats))
        column[i] = total
    return column


def _cat_value(cell):
    return None if cell is MISSING else _canonical_token(cell)


@dataclass
class DynamicsMatrix:
    """|customers| x |features| difference matrix of change statistics."""

    customers: list[str]
    features: list[str]
    values: np.ndarray

    def column(self, feature: str) -> np.ndarray:
        return self.values[:, self.features.index(feature)]


def dynamics_matrix(table: BigTable, nc_kinds: dict[str, str], config: RecognizerConfig) -> DynamicsMatrix:
    feats = [f for f in table.features if nc_kinds.get(f) in ("numerical", "categorical")]
    values = np.zeros((table.n_customers, len(feats)))
    for k, feature in enumerate(feats):
        values[:, k] = dynamics_statistic(table, feature, nc_kinds[feature])
    return DynamicsMatrix(customers=list(table.customers), features=feats, values=values)


def sd_recognize(matrix: DynamicsMatrix, nc_kinds: dict[str, str], config: RecognizerConfig) -> dict[str, bool]:
    """Per-feature dynamic flag: dynamic iff the number of customers whose
    change statistic clears the pair threshold exceeds the feature threshold.
    Equality resolves to static."""
    t_f = config.resolved_feature_threshold(len(matrix.customers))
    out: dict[str, bool] = {}
    for k, feature in enumerate(matrix.features):
        t_d = config.pair_threshold(nc_kinds[feature])
        d_f = int(np.sum(matrix.values[:, k] > t_d))
        out[feature] = d_f > t_f
    return out


def dynamic_customer_counts(matrix: DynamicsMatrix, nc_kinds: dict[str, str], config: RecognizerConfig) -> dict[str, int]:
    counts = {}
    for k, feature in enumerate(matrix.features):
        t_d = config.pair_threshold(nc_kinds[feature])
        counts[feature] = int(np.sum(matrix.values[:, k] > t_d))
    return counts


@dataclass
class FeatureSchema:
    """Recognized kinds plus everything needed to re-encode new data.

    Holds per-feature kind, vocabularies for categorical features,
    normalization ranges for numerical ones and the per-feature count of
    customers showing dynamics. Immutable once built; persisted as JSON.
    """

    feature_order: list[str]
    kinds: dict[str, FeatureKind]
    vocabularies: dict[str, Vocabulary]
    numeric_stats: dict[str, tuple[float, float]]
    dynamics_summary: dict[str, int]
    config: RecognizerConfig

    def __post_init__(self):
        for feature, (lo, hi) in self.numeric_stats.items():
            if hi < lo:
                raise SchemaError(f"feature {feature!r}: max < min in stats")
        dates = [f for f, k in self.kinds.items() if k is FeatureKind.DATE_INDEX]
        if len(dates) > 1:
            raise SchemaError(f"more than one date-kind feature: {dates}")

    def features_of_kind(self, kind: FeatureKind) -> list[str]:
        return [f for f in self.feature_order if self.kinds[f] is kind]

    def branch_features(self) -> dict[str, list[str]]:
        return {k.value: self.features_of_kind(k) for k in
                (FeatureKind.STATIC_NUMERICAL, FeatureKind.DYNAMIC_NUMERICAL,
                 FeatureKind.STATIC_CATEGORICAL, FeatureKind.DYNAMIC_CATEGORICAL)}

    def kind_ratios(self) -> dict[str, float]:
        counted = [f for f in self.feature_order if self.kinds[f] is not FeatureKind.DATE_INDEX]
        if not counted:
            return {}
        return {
            kind.value: sum(1 for f in counted if self.kinds[f] is kind) / len(counted)
            for kind in (FeatureKind.STATIC_NUMERICAL, FeatureKind.DYNAMIC_NUMERICAL,
                         FeatureKind.STATIC_CATEGORICAL, FeatureKind.DYNAMIC_CATEGORICAL)
        }

    def to_dict(self) -> dict:
        return {
            "feature_order": self.feature_order,
            "kinds": {f: k.value for f, k in self.kinds.items()},
            "vocabularies": {f: v.token_to_id for f, v in self.vocabularies.items()},
            "numeric_stats": {f: list(s) for f, s in self.numeric_stats.items()},
            "dynamics_summary": self.dynamics_summary,
            "config": {
                "integer_unique_threshold": self.config.integer_unique_threshold,
                "pair_threshold_categorical": self.config.pair_threshold_categorical,
                "pair_threshold_numerical": self.config.pair_threshold_numerical,
                "feature_threshold": self.config.feature_threshold,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureSchema":
        return cls(
            feature_order=list(payload["feature_order"]),
            kinds={f: FeatureKind(k) for f, k in payload["kinds"].items()},
            vocabularies={f: Vocabulary(token_to_id=dict(v)) for f, v in payload["vocabularies"].items()},
            numeric_stats={f: (float(s[0]), float(s[1])) for f, s in payload["numeric_stats"].items()},
            dynamics_summary={f: int(v) for f, v in payload["dynamics_summary"].items()},
            config=RecognizerConfig(**payload["config"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as e:
            raise TableIOError(str(e)) from e
        return cls.from_dict(payload)


def build_schema(table: BigTable, config: RecognizerConfig = RecognizerConfig(),
                 overrides: dict[str, FeatureKind] | None = None) -> FeatureSchema:
    """Run both recognizers and fit vocabularies/normalization stats.

    Records must already be in chronological order when a date index exists.
    `overrides` pins a feature to a kind, bypassing recognition for it (the
    analyst-assignment hook); overridden features still get vocabularies or
    ranges fitted for their assigned kind.
    """
    overrides = dict(overrides or {})
    nc_kinds = nc_recognize(table, config, ignore=overrides.keys())
    for feature, kind in overrides.items():
        if feature not in table.features:
            raise SchemaError(f"override for unknown feature {feature!r}")
        nc_kinds[feature] = {
            FeatureKind.STATIC_NUMERICAL: "numerical",
            FeatureKind.DYNAMIC_NUMERICAL: "numerical",
            FeatureKind.STATIC_CATEGORICAL: "categorical",
            FeatureKind.DYNAMIC_CATEGORICAL: "categorical",
            FeatureKind.DATE_INDEX: "date",
        }[kind]

    matrix = dynamics_matrix(table, {f: k for f, k in nc_kinds.items() if k != "date"}, config)
    dynamic_flags = sd_recognize(matrix, nc_kinds, config)
    counts = dynamic_customer_counts(matrix, nc_kinds, config)

    kinds: dict[str, FeatureKind] = {}
    for feature in table.features:
        if feature in overrides:
            kinds[feature] = overrides[feature]
        elif nc_kinds[feature] == "date":
            kinds[feature] = FeatureKind.DATE_INDEX
        elif nc_kinds[feature] == "numerical":
            kinds[feature] = FeatureKind.DYNAMIC_NUMERICAL if dynamic_flags[feature] else FeatureKind.STATIC_NUMERICAL
        else:
            kinds[feature] = FeatureKind.DYNAMIC_CATEGORICAL if dynamic_flags[feature] else FeatureKind.STATIC_CATEGORICAL

    vocabularies: dict[str, Vocabulary] = {}
    numeric_stats: dict[str, tuple[float, float]] = {}
    for feature in table.features:
        kind = kinds[feature]
        if kind.is_categorical:
            _, vocab = tokenize(list(table.column(feature)))
            vocabularies[feature] = vocab
        elif kind.is_numerical:
            numeric_stats[feature] = numeric_range(table, feature)

    return FeatureSchema(feature_order=list(table.features), kinds=kinds,
                         vocabularies=vocabularies, numeric_stats=numeric_stats,
                         dynamics_summary=counts, config=config)
