"""Masking-based interpretation: which features move a representation
position (or a predicted class probability), and for whom.

Three steps per target: pick the k customers with the largest target value,
mask random (feature, time) cells of each and re-run the model, then keep
the features whose mean absolute effect clears a threshold. The output
bundles population-level rankings and per-customer contribution lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numeric
from .encode import encode_rows, masked_rows, stack_encoded, check_schema
from .errors import ConfigError, InvalidCellCoordinatesError, PositionOutOfRangeError
from .model import CustomerEncoder
from .prep import FeatureKind
from .table import BigTable


@dataclass(frozen=True)
class Target:
    """What the deltas are measured against.

    kind "position": value of one representation coordinate.
    kind "class": predicted probability of one class of one task head.
    """

    kind: str
    position: int = 0
    task: str = ""
    class_index: int = 1

    def __post_init__(self):
        if self.kind not in ("position", "class"):
            raise ConfigError(f"unknown target kind {self.kind!r}")
        if self.kind == "class" and not self.task:
            raise ConfigError("class target needs a task name")

    def key(self) -> str:
        if self.kind == "position":
            return f"position:{self.position}"
        return f"class:{self.task}:{self.class_index}"

    def to_dict(self) -> dict:
        if self.kind == "position":
            return {"kind": "position", "position": self.position}
        return {"kind": "class", "task": self.task, "class_index": self.class_index}


def position_target(position: int) -> Target:
    return Target(kind="position", position=position)


def class_target(task: str, class_index: int = 1) -> Target:
    return Target(kind="class", task=task, class_index=class_index)


@dataclass(frozen=True)
class InterpretConfig:
    k: int = 10
    mask_samples: int = 64
    delta_threshold: float | None = None        # None: 0.05 * std of the target
    targets: tuple[Target, ...] | None = None   # None: every representation position
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.mask_samples < 1:
            raise ConfigError("mask_samples must be >= 1")
        if self.delta_threshold is not None and self.delta_threshold < 0:
            raise ConfigError("delta_threshold must be non-negative")


def sensitive_customers(representations, position: int, k: int) -> list[str]:
    """Ids of the k customers with the largest value at `position`.

    Ties break toward the smaller customer id, so the result is invariant
    to the input ordering.
    """
    pairs = list(representations.items()) if isinstance(representations, dict) \
        else list(representations)
    if not pairs:
        return []
    width = len(np.atleast_1d(pairs[0][1]))
    if not 0 <= position < width:
        raise PositionOutOfRangeError(f"position {position} outside [0, {width})")
    values = {cid: float(np.atleast_1d(vec)[position]) for cid, vec in pairs}
    return _top_k(values, k)


def _top_k(values: dict[str, float], k: int) -> list[str]:
    ranked = sorted(values, key=lambda cid: (-values[cid], cid))
    return ranked[:min(k, len(ranked))]


def _target_values(model: CustomerEncoder, batch, target: Target) -> np.ndarray:
    out = model.forward(batch, train=False)
    if target.kind == "position":
        if not 0 <= target.position < model.config.rep_width:
            raise PositionOutOfRangeError(
                f"position {target.position} outside [0, {model.config.rep_width})")
        return out.rep.data[:, target.position]
    proba = numeric.softmax(model.task_logits(out.rep, target.task), axis=-1).data
    if not 0 <= target.class_index < proba.shape[1]:
        raise PositionOutOfRangeError(
            f"class index {target.class_index} outside [0, {proba.shape[1]})")
    return proba[:, target.class_index]


def maskable_features(model: CustomerEncoder) -> list[str]:
    return [f for f in model.schema.feature_order
            if model.schema.kinds[f] is not FeatureKind.DATE_INDEX]


def mask_and_delta(model: CustomerEncoder, table: BigTable, customer: str,
                   feature: str, time_index: int, target: Target) -> float:
    """target(cell masked to Missing) − target(original), evaluation mode.

    The table is never modified; masking happens on a copied record list.
    """
    check_schema(table, model.schema)
    rows = table.records.get(customer)
    if rows is None:
        raise InvalidCellCoordinatesError(f"unknown customer {customer!r}")
    if feature not in maskable_features(model):
        raise InvalidCellCoordinatesError(f"feature {feature!r} is not maskable")
    if not 0 <= time_index < len(rows):
        raise InvalidCellCoordinatesError(
            f"record index {time_index} outside [0, {len(rows)}) for {customer!r}")
    j = model.schema.feature_order.index(feature)
    variants = [encode_rows(rows, model.schema, model.layout),
                encode_rows(masked_rows(rows, j, time_index), model.schema, model.layout)]
    values = _target_values(model, stack_encoded([customer, customer], variants), target)
    return float(values[1] - values[0])


def sensitive_features(deltas, threshold: float) -> list[dict]:
    """Aggregate (customer, feature, time, delta) trials into a ranking.

    Features whose mean |delta| exceeds the threshold are returned ordered
    by descending score; `sign` is the sign of the mean signed delta and
    `support` counts the customers whose own mean |delta| clears the
    threshold too.
    """
    by_feature: dict[str, list[float]] = {}
    by_customer: dict[str, dict[str, list[float]]] = {}
    for customer, feat, _t, delta in deltas:
        by_feature.setdefault(feat, []).append(delta)
        by_customer.setdefault(feat, {}).setdefault(customer, []).append(delta)
    out = []
    for feat, values in by_feature.items():
        arr = np.array(values)
        score = float(np.abs(arr).mean())
        if score <= threshold:
            continue
        mean_delta = float(arr.mean())
        support = sum(1 for vals in by_customer[feat].values()
                      if np.abs(vals).mean() > threshold)
        out.append({"feature": feat, "score": score,
                    "sign": int(np.sign(mean_delta)), "support": support})
    out.sort(key=lambda rec: (-rec["score"], rec["feature"]))
    return out


@dataclass
class TargetGenome:
    target: Target
    threshold: float
    customers: list[str]
    features: list[dict]
    per_customer: dict[str, list[dict]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"target": self.target.to_dict(), "threshold": self.threshold,
                "customers": self.customers, "features": self.features,
                "per_customer": self.per_customer}


@dataclass
class GenomeReport:
    seed: int
    mask_samples: int
    targets: list[TargetGenome]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "mask_samples": self.mask_samples,
                "targets": [t.to_dict() for t in self.targets]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def render_text(self, width: int = 40) -> str:
        """Plain-text horizontal bars, one block per target."""
        lines = []
        for genome in self.targets:
            lines.append(f"target {genome.target.key()}  "
                         f"(threshold {genome.threshold:.6g}, "
                         f"{len(genome.customers)} sensitive customers)")
            if not genome.features:
                lines.append("  (no feature clears the threshold)")
            top = genome.features[0]["score"] if genome.features else 1.0
            for rec in genome.features:
                bar = "#" * max(1, int(round(width * rec["score"] / top)))
                sign = "+" if rec["sign"] >= 0 else "-"
                lines.append(f"  {rec['feature']:<16} {sign} {bar} "
                             f"{rec['score']:.6g} (support {rec['support']})")
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def genome_report(model: CustomerEncoder, table: BigTable,
                  config: InterpretConfig = InterpretConfig()) -> GenomeReport:
    """Run the three interpretation steps for every configured target.

    Position targets default to all representation coordinates. Masking
    draws are partitioned per (target, customer) substream, so reports are
    reproducible and customers can be processed in any order.
    """
    check_schema(table, model.schema)
    customers = list(table.customers)
    names, reps = model.represent(table)
    feats = maskable_features(model)
    if config.targets is not None:
        targets = list(config.targets)
    else:
        targets = [position_target(p) for p in range(model.config.rep_width)]

    genomes = []
    for target in targets:
        if target.kind == "position":
            if not 0 <= target.position < reps.shape[1]:
                raise PositionOutOfRangeError(
                    f"position {target.position} outside [0, {reps.shape[1]})")
            values = {cid: float(reps[i, target.position]) for i, cid in enumerate(names)}
        else:
            _, proba = model.predict_proba(table, target.task)
            if not 0 <= target.class_index < proba.shape[1]:
                raise PositionOutOfRangeError(
                    f"class index {target.class_index} outside [0, {proba.shape[1]})")
            values = {cid: float(proba[i, target.class_index]) for i, cid in enumerate(names)}
        threshold = (config.delta_threshold if config.delta_threshold is not None
                     else 0.05 * float(np.std(list(values.values()))))
        chosen = _top_k(values, config.k)

        trials = []
        for cid in chosen:
            rows = table.records[cid]
            if not rows or not feats:
                continue
            rng = numeric.substream(config.seed, f"interpret/{target.key()}/{cid}")
            draws = [(int(rng.integers(len(rows))), int(rng.integers(len(feats))))
                     for _ in range(config.mask_samples)]
            variants = [encode_rows(rows, model.schema, model.layout)]
            for t, fi in draws:
                j = model.schema.feature_order.index(feats[fi])
                variants.append(encode_rows(masked_rows(rows, j, t), model.schema, model.layout))
            batch = stack_encoded([cid] * len(variants), variants)
            vals = _target_values(model, batch, target)
            base = vals[0]
            for (t, fi), v in zip(draws, vals[1:]):
                trials.append((cid, feats[fi], t, float(v - base)))

        ranked = sensitive_features(trials, threshold)
        per_customer: dict[str, list[dict]] = {}
        for cid in chosen:
            per_feat: dict[str, list[float]] = {}
            for c, feat, _t, delta in trials:
                if c == cid:
                    per_feat.setdefault(feat, []).append(delta)
            contribs = [{"feature": feat, "contribution": float(np.mean(vals))}
                        for feat, vals in per_feat.items()]
            contribs.sort(key=lambda rec: (-abs(rec["contribution"]), rec["feature"]))
            per_customer[cid] = contribs
        genomes.append(TargetGenome(target=target, threshold=threshold,
                                    customers=chosen, features=ranked,
                                    per_customer=per_customer))
    return GenomeReport(seed=config.seed, mask_samples=config.mask_samples,
                        targets=genomes)
