"""Profile a mixed customer table: recognize feature kinds and dynamics.

Builds a small in-memory table whose columns mix numbers, tokens and dates,
then walks the two recognition stages: numerical-vs-categorical first, then
static-vs-dynamic from the per-customer change statistics.
"""

import numpy as np

from tabrep.prep import (RecognizerConfig, build_schema, dynamics_matrix,
                         nc_recognize, sd_recognize)
from tabrep.table import MISSING, BigTable, Number, Row, Token, compute_stats


def make_table():
    rng = np.random.default_rng(7)
    records = {}
    for u in range(12):
        rows = []
        city = Token(rng.choice(["north", "south", "east"]))
        age = Number(float(rng.integers(20, 70)))
        balance = float(rng.uniform(100, 900))
        for t in range(4):
            balance += float(rng.normal(0, 80))
            plan = Token(rng.choice(["basic", "plus", "max"]))
            bal_cell = MISSING if rng.random() < 0.2 else Number(round(balance, 2))
            rows.append(Row(cells=(city, age, bal_cell, plan), date=t * 86400))
        records[f"cust{u:02d}"] = rows
    return BigTable(customers=list(records),
                    features=["city", "age", "balance", "plan"],
                    records=records)


table = make_table()
config = RecognizerConfig()

print("=== step 1: numerical vs categorical ===")
kinds = nc_recognize(table, config)
for feature, kind in kinds.items():
    print(f"  {feature:>8}: {kind}")

print("\n=== step 2: change statistics per customer ===")
matrix = dynamics_matrix(table, kinds, config)
print(f"  rows are customers, columns are {matrix.features}")
with np.printoptions(precision=2, suppress=True):
    print(matrix.values[:5])

print("\n=== step 3: static vs dynamic ===")
dynamic = sd_recognize(matrix, kinds, config)
for feature, flag in dynamic.items():
    print(f"  {feature:>8}: {'dynamic' if flag else 'static'}")

print("\n=== full schema and table statistics ===")
schema = build_schema(table, config)
for feature in schema.feature_order:
    print(f"  {feature:>8}: {schema.kinds[feature].value}")
stats = compute_stats(table, schema)
print(f"  missing ratio    {stats.feature_missing_ratio:.3f}")
print(f"  structural ratio {stats.structural_missing_ratio:.3f}")
print(f"  kind mixture     {stats.kind_ratios}")
