"""Turn schema-conformant customer records into dense model inputs.

The four branches consume: one token id per static categorical feature, one
normalized value per static numerical feature, and per-time-step ids/values
for the dynamic features over a fixed-length recent window. Everything here
is a pure function of (table, schema); no learned state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaMismatchError
from .prep import FeatureSchema, uniform_normalize, _cat_value
from .table import MISSING, BigTable, Number, Row


@dataclass(frozen=True)
class BranchLayout:
    """Feature ordering and vocabulary layout shared by encoder and banks."""

    n_s: int
    cs_features: tuple[str, ...]
    sn_features: tuple[str, ...]
    cd_features: tuple[str, ...]
    dn_features: tuple[str, ...]
    cs_vocab_sizes: tuple[int, ...]
    cd_vocab_sizes: tuple[int, ...]

    @classmethod
    def from_schema(cls, schema: FeatureSchema, n_s: int) -> "BranchLayout":
        branch = schema.branch_features()
        return cls(
            n_s=n_s,
            cs_features=tuple(branch["SC"]),
            sn_features=tuple(branch["SN"]),
            cd_features=tuple(branch["DC"]),
            dn_features=tuple(branch["DN"]),
            cs_vocab_sizes=tuple(schema.vocabularies[f].size for f in branch["SC"]),
            cd_vocab_sizes=tuple(schema.vocabularies[f].size for f in branch["DC"]),
        )

    @staticmethod
    def offsets(sizes: tuple[int, ...]) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(sizes)[:-1]]) if sizes else np.zeros(0, dtype=np.int64)


@dataclass
class EncodedCustomer:
    cs_ids: np.ndarray      # [n_cs] ids offset into the static categorical table
    ns_vals: np.ndarray     # [n_sn] normalized-imputed values
    cd_ids: np.ndarray      # [n_s, n_cd] offset ids, missing id on padding
    nd_vals: np.ndarray     # [n_s, n_dn]
    seq_valid: np.ndarray   # [n_s] bool
    presence: np.ndarray    # [4] bits for (CS, NS, CD, ND)


@dataclass
class Batch:
    customers: list[str]
    cs_ids: np.ndarray      # [b, n_cs]
    ns_vals: np.ndarray     # [b, n_sn]
    cd_ids: np.ndarray      # [b, n_s, n_cd]
    nd_vals: np.ndarray     # [b, n_s, n_dn]
    seq_valid: np.ndarray   # [b, n_s]
    presence: np.ndarray    # [b, 4]

    @property
    def size(self) -> int:
        return len(self.customers)


def check_schema(table: BigTable, schema: FeatureSchema) -> None:
    if list(table.features) != list(schema.feature_order):
        raise SchemaMismatchError(
            f"table features {table.features} differ from schema {schema.feature_order}")


def _latest_non_missing(rows: list[Row], j: int):
    for row in reversed(rows):
        if row.cells[j] is not MISSING:
            return row.cells[j]
    return MISSING


def encode_customer(table: BigTable, customer: str, schema: FeatureSchema,
                    layout: BranchLayout) -> EncodedCustomer:
    rows = table.records.get(customer)
    if rows is None:
        raise SchemaMismatchError(f"unknown customer {customer!r}")
    return encode_rows(rows, schema, layout)


def encode_rows(rows: list[Row], schema: FeatureSchema,
                layout: BranchLayout) -> EncodedCustomer:
    """Encode one customer's records; they must already be in time order.

    Static values are the most recent non-missing cell over all records;
    dynamic sequences keep the most recent `n_s` records, right-padded. A
    customer with no records gets one all-missing anchor step so attention
    stays well-defined; its dynamic branches are flagged absent and zeroed
    downstream.
    """
    index = {f: i for i, f in enumerate(schema.feature_order)}
    n_s = layout.n_s

    cs_ids = np.zeros(len(layout.cs_features), dtype=np.int64)
    cs_any = False
    for i, f in enumerate(layout.cs_features):
        cell = _latest_non_missing(rows, index[f])
        cs_ids[i] = schema.vocabularies[f].encode(cell)
        cs_any = cs_any or cell is not MISSING
    cs_ids += BranchLayout.offsets(layout.cs_vocab_sizes).astype(np.int64)

    ns_vals = np.zeros(len(layout.sn_features))
    ns_any = False
    for i, f in enumerate(layout.sn_features):
        cell = _latest_non_missing(rows, index[f])
        if isinstance(cell, Number):
            ns_vals[i] = uniform_normalize(cell.value, schema.numeric_stats[f])
            ns_any = True

    window = rows[-n_s:]
    seq_valid = np.zeros(n_s, dtype=bool)
    seq_valid[: len(window)] = True
    if not window:
        seq_valid[0] = True   # anchor step, content all-missing

    cd_ids = np.zeros((n_s, len(layout.cd_features)), dtype=np.int64)
    for i, f in enumerate(layout.cd_features):
        vocab = schema.vocabularies[f]
        j = index[f]
        for t, row in enumerate(window):
            cd_ids[t, i] = vocab.encode(row.cells[j])
    cd_ids += BranchLayout.offsets(layout.cd_vocab_sizes).astype(np.int64)[None, :]

    nd_vals = np.zeros((n_s, len(layout.dn_features)))
    for i, f in enumerate(layout.dn_features):
        stats = schema.numeric_stats[f]
        j = index[f]
        for t, row in enumerate(window):
            cell = row.cells[j]
            if isinstance(cell, Number):
                nd_vals[t, i] = uniform_normalize(cell.value, stats)

    presence = np.array([
        float(cs_any),
        float(ns_any),
        float(bool(window) and len(layout.cd_features) > 0),
        float(bool(window) and len(layout.dn_features) > 0),
    ])
    return EncodedCustomer(cs_ids=cs_ids, ns_vals=ns_vals, cd_ids=cd_ids,
                           nd_vals=nd_vals, seq_valid=seq_valid, presence=presence)


def encode_batch(table: BigTable, customers: list[str], schema: FeatureSchema,
                 layout: BranchLayout) -> Batch:
    encoded = [encode_customer(table, c, schema, layout) for c in customers]
    return stack_encoded(customers, encoded)


def stack_encoded(customers: list[str], encoded: list[EncodedCustomer]) -> Batch:
    return Batch(
        customers=list(customers),
        cs_ids=np.stack([e.cs_ids for e in encoded]),
        ns_vals=np.stack([e.ns_vals for e in encoded]),
        cd_ids=np.stack([e.cd_ids for e in encoded]),
        nd_vals=np.stack([e.nd_vals for e in encoded]),
        seq_valid=np.stack([e.seq_valid for e in encoded]),
        presence=np.stack([e.presence for e in encoded]),
    )


def masked_rows(rows: list[Row], feature_index: int, record_index: int) -> list[Row]:
    """Copy of `rows` with one cell set to Missing; input rows untouched."""
    out = list(rows)
    row = out[record_index]
    cells = list(row.cells)
    cells[feature_index] = MISSING
    out[record_index] = Row(cells=tuple(cells), date=row.date)
    return out


def augmented_summary(table: BigTable, customer: str, schema: FeatureSchema) -> np.ndarray:
    """Fixed model-free customer summary used as reconstruction input.

    Static numerical values (normalized, imputed), then per-feature time
    means of normalized dynamic numerical values, then per-feature change
    rates of dynamic categorical values (missing counts as its own value).
    """
    rows = table.records[customer]
    branch = schema.branch_features()
    out: list[float] = []
    for f in branch["SN"]:
        cell = _latest_non_missing(rows, table.feature_index(f))
        out.append(uniform_normalize(cell.value, schema.numeric_stats[f])
                   if isinstance(cell, Number) else 0.0)
    for f in branch["DN"]:
        j = table.feature_index(f)
        vals = [uniform_normalize(c.value, schema.numeric_stats[f])
                for c in (row.cells[j] for row in rows) if isinstance(c, Number)]
        out.append(sum(vals) / len(vals) if vals else 0.0)
    for f in branch["DC"]:
        j = table.feature_index(f)
        cells = [row.cells[j] for row in rows]
        if len(cells) < 2:
            out.append(0.0)
        else:
            changes = sum(1 for a, b in zip(cells[:-1], cells[1:]) if _cat_value(a) != _cat_value(b))
            out.append(changes / (len(cells) - 1))
    return np.array(out)


def summary_width(schema: FeatureSchema) -> int:
    branch = schema.branch_features()
    return len(branch["SN"]) + len(branch["DN"]) + len(branch["DC"])
