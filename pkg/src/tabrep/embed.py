"""Branch embeddings: categorical lookups, position-based numerical
embedding and max-concatenation aggregation.

Categorical features each own a block of rows in a shared lookup matrix
(ids are stored pre-offset so a whole batch resolves with one gather).
Numerical features scale a per-feature learned row by the normalized value,
so an imputed-missing 0.0 contributes exactly the zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric
from .errors import IdOutOfRangeError, LengthMismatchError
from .numeric import Parameter, Tensor


@dataclass
class EmbeddingBank:
    """Lookup storage for one branch pair (categorical table + numeric rows).

    `cat_table` stacks every categorical feature's vocabulary rows; feature f
    owns rows [offset_f, offset_f + vocab_size_f). `num_matrix` has one row
    per numerical feature in fixed schema order. Both share width `dim`.
    """

    dim: int
    cat_features: list[str]
    cat_offsets: dict[str, int]
    cat_sizes: dict[str, int]
    cat_table: Parameter | None
    num_features: list[str]
    num_matrix: Parameter | None

    @classmethod
    def build(cls, dim: int, cat_vocab_sizes: dict[str, int], num_features: list[str],
              rng: np.random.Generator, name: str) -> "EmbeddingBank":
        cat_features = list(cat_vocab_sizes)
        offsets, total = {}, 0
        for f in cat_features:
            offsets[f] = total
            total += cat_vocab_sizes[f]
        cat_table = numeric.embedding_init((total, dim), rng, f"{name}.cat") if total else None
        num_matrix = numeric.embedding_init((len(num_features), dim), rng, f"{name}.num") if num_features else None
        return cls(dim=dim, cat_features=cat_features, cat_offsets=offsets,
                   cat_sizes=dict(cat_vocab_sizes), cat_table=cat_table,
                   num_features=list(num_features), num_matrix=num_matrix)

    def offset_ids(self, ids_by_feature: dict[str, np.ndarray]) -> np.ndarray:
        """Stack per-feature id arrays into one offset id array (last axis = features)."""
        cols = []
        for f in self.cat_features:
            ids = np.asarray(ids_by_feature[f], dtype=np.int64)
            size = self.cat_sizes[f]
            if ids.size and (ids.min() < 0 or ids.max() >= size):
                raise IdOutOfRangeError(f"feature {f!r}: id outside [0, {size})")
            cols.append(ids + self.cat_offsets[f])
        return np.stack(cols, axis=-1)

    def feature_rows(self, feature: str) -> np.ndarray:
        lo = self.cat_offsets[feature]
        return self.cat_table.data[lo:lo + self.cat_sizes[feature]]

    def parameters(self) -> list[Parameter]:
        return [p for p in (self.cat_table, self.num_matrix) if p is not None]


def categorical_embed(ids: np.ndarray, table: Tensor) -> Tensor:
    """Row lookup: output[..., f, :] = table[ids[..., f], :].

    Ids must already be offset into the shared table. Id 0 of each feature
    block is the learned missing row; it is not forced to zero.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IdOutOfRangeError(f"id outside table with {table.shape[0]} rows")
    return table[ids]


def positional_numeric_embed(values, matrix: Tensor) -> Tensor:
    """Scale row i of the lookup matrix by value i: output[..., i, :] = v_i * M_i.

    Values must already be normalized and imputed; a missing (0.0) value
    yields exactly the zero row.
    """
    values = numeric.as_tensor(values)
    if values.shape[-1] != matrix.shape[0]:
        raise LengthMismatchError(f"{values.shape[-1]} values vs {matrix.shape[0]} matrix rows")
    expanded = numeric.reshape(values, values.shape + (1,))
    return expanded * matrix


def max_concat(e: Tensor, mask: np.ndarray | None = None, axis: int = -2,
               return_degenerate: bool = False):
    """Columnwise maximum over the row axis, optionally restricted by `mask`.

    Rows where the mask is false are excluded; a slice with no valid row
    yields the zero vector and is flagged degenerate. Ties route the
    gradient to the lowest row index.
    """
    axis = axis % e.ndim
    if mask is None:
        rows = e.shape[axis]
        if rows == 0:
            out = Tensor(np.zeros(e.shape[:axis] + e.shape[axis + 1:]))
            degenerate = np.ones(e.shape[:axis], dtype=bool) if axis else np.array(True)
            return (out, degenerate) if return_degenerate else out
        out = numeric.tensor_max(e, axis=axis)
        degenerate = np.zeros(e.shape[:axis], dtype=bool) if axis else np.array(False)
    else:
        mask = np.asarray(mask, dtype=bool)
        out = numeric.masked_max(e, mask, axis=axis)
        degenerate = numeric.degenerate_rows(mask, axis=axis)
    return (out, degenerate) if return_degenerate else out
