"""
Accuracy against cardinality on mixed-difficulty data
=====================================================

Trains the linear base model, one selector per cardinality set
{1}, {1,2}, {1,2,4}, {1,2,4,8}, and compares them with fixed top-k sets.
Takes about a quarter of a minute.
"""

import csv
import os
import sys
import tempfile

import numpy as np

from topk_lab.cli import main

here = os.path.dirname(os.path.abspath(__file__))
cfg = os.path.join(here, "..", "configs", "mixed_difficulty.json")
out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="topk-curve-")

for cmd in ("train-base", "train-selector", "curve"):
    if main([cmd, "--config", cfg, "--out", out]) != 0:
        sys.exit(f"{cmd} failed")

with open(os.path.join(out, "curve.csv")) as fh:
    rows = list(csv.DictReader(fh))
top = {float(r["avg_cardinality"]): float(r["accuracy"]) for r in rows if r["method"] == "top_k"}
ks = sorted(top)

# %%
# Each selector point against the top-k curve, interpolated linearly at the
# same mean cardinality.
print(f"\n{'setting':10s} {'cardinality':>11s} {'accuracy':>9s} {'top-k curve':>12s} {'margin':>8s}")
for r in rows:
    if r["method"] != "cardinality_aware":
        continue
    c, a = float(r["avg_cardinality"]), float(r["accuracy"])
    ref = float(np.interp(c, ks, [top[k] for k in ks]))
    print(f"{r['setting']:10s} {c:11.3f} {a:9.4f} {ref:12.4f} {a - ref:+8.4f}")
print(f"\noutputs in {out}")
