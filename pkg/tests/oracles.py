"""Independent straight-line reference implementations used as test oracles.

Everything here is deliberately naive and shares no code with the package:
plain loops over cells, no vectorization, no config plumbing.
"""

from __future__ import annotations

import numpy as np

from tabrep.table import MISSING, BigTable, Date, Number, Row, Token


def reference_feature_kind(cells, integer_unique_threshold: int) -> str:
    """numerical / categorical / date by direct case analysis of one column."""
    present = [c for c in cells if c is not MISSING]
    if not present:
        return "categorical"
    if all(isinstance(c, Date) for c in present):
        return "date"
    if all(isinstance(c, Token) for c in present):
        return "categorical"
    assert all(isinstance(c, Number) for c in present), "mixed column reached oracle"
    if any(not float(c.value).is_integer() for c in present):
        return "numerical"
    distinct = len({c.value for c in present})
    return "numerical" if distinct > integer_unique_threshold else "categorical"


def _norm(v: float, lo: float, hi: float) -> float:
    if hi == lo:
        return 0.5
    return min(1.0, max(0.0, (v - lo) / (hi - lo)))


def reference_change_statistic(rows_cells, kind: str, lo: float = 0.0,
                               hi: float = 0.0) -> float:
    """Per-customer change statistic over one already-ordered cell sequence."""
    if len(rows_cells) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(rows_cells[:-1], rows_cells[1:]):
        if kind == "categorical":
            ka = None if a is MISSING else _token_key(a)
            kb = None if b is MISSING else _token_key(b)
            if ka != kb:
                total += 1.0
        else:
            if a is MISSING or b is MISSING:
                continue
            total += abs(_norm(b.value, lo, hi) - _norm(a.value, lo, hi))
    return total


def _token_key(cell) -> str:
    if isinstance(cell, Token):
        return cell.value
    if isinstance(cell, Number):
        v = cell.value
        return str(int(v)) if float(v).is_integer() else repr(v)
    if isinstance(cell, Date):
        return str(cell.epoch)
    raise TypeError(cell)


def reference_dynamics(table: BigTable, feature: str, kind: str,
                       pair_threshold: float, feature_threshold: int) -> str:
    """static / dynamic by counting customers whose statistic clears the
    pair threshold, then comparing that count to the feature threshold."""
    j = table.features.index(feature)
    if kind == "numerical":
        values = [c.value for c in table.column(feature) if isinstance(c, Number)]
        lo, hi = (min(values), max(values)) if values else (0.0, 0.0)
    else:
        lo = hi = 0.0
    count = 0
    for cust in table.customers:
        cells = [row.cells[j] for row in table.records[cust]]
        if reference_change_statistic(cells, kind, lo, hi) > pair_threshold:
            count += 1
    return "dynamic" if count > feature_threshold else "static"


def random_table(rng: np.random.Generator) -> BigTable:
    """Small random customer table mixing all cell kinds, missing included.

    Each feature commits to one non-missing cell kind so the mixed-kind
    error path stays out of oracle comparisons.
    """
    n_customers = int(rng.integers(1, 11))
    n_features = int(rng.integers(1, 9))
    styles = []
    for _ in range(n_features):
        style = rng.choice(["token", "float", "small_int", "wide_int", "date",
                            "constant", "empty"])
        styles.append(style)
    records = {}
    for u in range(n_customers):
        k = int(rng.integers(1, 7))
        rows = []
        for t in range(k):
            cells = []
            for style in styles:
                if rng.random() < 0.25:
                    cells.append(MISSING)
                    continue
                if style == "token":
                    cells.append(Token(f"v{int(rng.integers(4))}"))
                elif style == "float":
                    cells.append(Number(round(float(rng.uniform(0, 10)), 3) + 0.0001))
                elif style == "small_int":
                    cells.append(Number(float(rng.integers(0, 3))))
                elif style == "wide_int":
                    cells.append(Number(float(rng.integers(0, 10_000))))
                elif style == "date":
                    cells.append(Date(int(rng.integers(0, 10)) * 86_400))
                elif style == "constant":
                    cells.append(Token("same"))
                else:
                    cells.append(MISSING)
            rows.append(Row(cells=tuple(cells), date=t))
        records[f"u{u}"] = rows
    return BigTable(customers=list(records),
                    features=[f"f{i}" for i in range(n_features)],
                    records=records, labels={}, has_date_index=True)


def reference_auc(scores, labels) -> float:
    """Brute-force pair counting with half credit for ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def reference_f_score(predicted, labels) -> float:
    tp = sum(1 for p, y in zip(predicted, labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(predicted, labels) if p == 1 and y == 0)
    fn = sum(1 for p, y in zip(predicted, labels) if p == 0 and y == 1)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def reference_weighted_accuracy(predicted, labels, frequency_weighted=False) -> float:
    classes = sorted(set(labels))
    recalls = []
    freqs = []
    for c in classes:
        idx = [i for i, y in enumerate(labels) if y == c]
        recalls.append(sum(1 for i in idx if predicted[i] == c) / len(idx))
        freqs.append(len(idx) / len(labels))
    if frequency_weighted:
        return sum(f * r for f, r in zip(freqs, recalls))
    return sum(recalls) / len(recalls)
