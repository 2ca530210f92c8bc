"""Acceptance suite: one group of checks per criterion, at the stated tolerances."""

import csv
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from topk_lab.bounds import BoundKind, exp_psi_inv_closed, psi, psi_inv
from topk_lab.campaign import CS_THEOREMS, STANDARD_THEOREMS, run_campaign, run_grid_campaign, summarize
from topk_lab.cli import main
from topk_lab.core import stream
from topk_lab.data import SyntheticRecipe, gaussian_clusters
from topk_lab.gradcheck import run_all
from topk_lab.losses import LossKind
from topk_lab.oracle import best_conditional_error_surrogate, best_conditional_error_topk, brute_force_best_topk
from topk_lab.train import StandardObjective, TrainConfig, fit, forward, init_model, topk_accuracies

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MC_TRIALS = 10_000
MC_SEED = 0
GRID_CONFIGS = 100
GAP_MIN = 1e-3


def crit(n):
    return pytest.mark.criterion(n)


def _threads():
    return max(1, min(8, os.cpu_count() or 1))


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


# --------------------------------------------------------------------------
# 1

@crit(1)
def test_topk_optimum_equivalence(note):
    t0 = time.perf_counter()
    rng = stream(MC_SEED, "montecarlo", 1)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        p = rng.dirichlet(np.full(n, rng.choice([0.2, 1.0, 5.0])))
        for k in range(1, n + 1):
            worst = max(worst, abs(best_conditional_error_topk(p, k) - brute_force_best_topk(p, k)))
    elapsed = time.perf_counter() - t0
    note(f"worst |diff| {worst:.2e} over 1000 distributions, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed <= 10.0


# --------------------------------------------------------------------------
# 2 and 3

@pytest.fixture(scope="module")
def standard_campaign():
    t0 = time.perf_counter()
    reps = run_campaign(STANDARD_THEOREMS, MC_TRIALS, MC_SEED, _threads())
    return summarize(reps), reps, time.perf_counter() - t0


@pytest.fixture(scope="module")
def cs_campaign():
    t0 = time.perf_counter()
    reps = run_campaign(CS_THEOREMS, MC_TRIALS, MC_SEED, _threads())
    return summarize(reps), reps, time.perf_counter() - t0


def _campaign_note(note, name, summary, reps):
    d = summary[name]
    bad = [r for r in reps if r.theorem == name and not r.satisfied]
    ks = sorted({r.k for r in bad})
    extra = f", violating k in {ks}" if bad else ""
    note(f"{name}: {d['trials']} trials, {d['violations']} violations, "
         f"min slack {d['min_slack']:.3g}{extra}")


@crit(2)
@pytest.mark.parametrize("theorem", STANDARD_THEOREMS)
def test_standard_bound_monte_carlo(theorem, standard_campaign, note):
    summary, reps, _ = standard_campaign
    _campaign_note(note, theorem, summary, reps)
    assert summary[theorem]["trials"] == MC_TRIALS
    assert summary[theorem]["violations"] == 0


@crit(2)
def test_standard_campaign_runtime(standard_campaign, note):
    elapsed = standard_campaign[2]
    note(f"all standard theorems: {elapsed:.1f} s with {_threads()} workers")
    assert elapsed <= 300.0


@crit(3)
@pytest.mark.parametrize("theorem", CS_THEOREMS)
def test_cost_sensitive_bound_monte_carlo(theorem, cs_campaign, note):
    summary, reps, _ = cs_campaign
    _campaign_note(note, theorem, summary, reps)
    assert summary[theorem]["trials"] == MC_TRIALS
    assert summary[theorem]["violations"] == 0


@crit(3)
def test_cost_sensitive_campaign_runtime(cs_campaign, note):
    elapsed = cs_campaign[2]
    note(f"all cost-sensitive theorems: {elapsed:.1f} s with {_threads()} workers")
    assert elapsed <= 300.0


# --------------------------------------------------------------------------
# 4

@crit(4)
@pytest.mark.parametrize("theorem", STANDARD_THEOREMS)
def test_expectation_bound_with_gaps(theorem, note):
    trials = run_grid_campaign(theorem, GRID_CONFIGS, MC_SEED)
    bad = [t for t in trials if not t.satisfied]
    both = sum(t.target_gap > GAP_MIN and t.surrogate_gap > GAP_MIN for t in trials)
    worst = min(t.worst_slack for t in trials)
    note(f"{theorem}: {len(trials)} grids, {len(bad)} violating, {both} with both gaps "
         f"> {GAP_MIN:g}, min slack {worst:.3g}")
    assert len(trials) >= GRID_CONFIGS
    assert both >= 1
    assert not bad


# --------------------------------------------------------------------------
# 5

@crit(5)
def test_gradients(note):
    rows = run_all(MC_SEED, 100)
    kernels = [r for r in rows if r.tol == 1e-5]
    models = [r for r in rows if r.tol == 1e-4]
    note(f"{len(kernels)} kernels, worst {max(r.worst for r in kernels):.2e}; "
         f"{len(models)} model checks, worst {max(r.worst for r in models):.2e}")
    assert len(kernels) == 16
    assert {r.name.split("/")[0] for r in models} == {"linear", "mlp2"}
    failed = [r.name for r in rows if not r.passed]
    assert not failed


# --------------------------------------------------------------------------
# 6

@crit(6)
def test_logistic_optimum_is_entropy(note):
    rng = stream(MC_SEED, "montecarlo", 6)
    kind = LossKind("comp_log")
    worst = 0.0
    for _ in range(100):
        p = rng.dirichlet(np.ones(int(rng.integers(2, 9))))
        ent = -float(sum(x * math.log(x) for x in p if x > 0))
        res = best_conditional_error_surrogate(kind, p, "numeric", rng)
        worst = max(worst, abs(res.value - ent))
    note(f"numeric optimum vs entropy: worst {worst:.2e}")
    assert worst <= 1e-8


@crit(6)
def test_psi_inverse(note):
    rng = stream(MC_SEED, "montecarlo", 7)
    kinds = [BoundKind(LossKind("comp_log"), 4), BoundKind(LossKind("comp_exp"), 4),
             BoundKind(LossKind("comp_gce", alpha=0.7), 4)]
    roundtrip = 0.0
    for kind in kinds:
        for v in rng.uniform(0, psi(kind, 1.0), 100):
            roundtrip = max(roundtrip, abs(psi(kind, psi_inv(kind, v)) - v))
    closed = max(abs(psi_inv(kinds[1], v) - exp_psi_inv_closed(v)) for v in rng.uniform(0, 1, 100))
    note(f"roundtrip worst {roundtrip:.1e}; sum-exp closed form worst {closed:.1e}")
    assert roundtrip <= 1e-10
    assert closed <= 1e-10


# --------------------------------------------------------------------------
# 7

@crit(7)
@pytest.mark.parametrize("family", ["comp_log", "comp_exp", "comp_gce", "comp_mae"])
def test_realizable_consistency(family, note):
    ds = gaussian_clusters(SyntheticRecipe(3, 2, 3000, 0.3, 0.0, seed=0))
    cfg = TrainConfig(lr=1e-3, batch_size=128, weight_decay=1e-5, epochs=500,
                      loss=LossKind(family))
    model = init_model("linear", 2, 3, stream(cfg.seed, "init"))
    reached = []

    def done(epoch, mdl):
        acc = topk_accuracies(forward(mdl, ds.features), ds.labels0, [1])[1]
        if acc == 1.0:
            reached.append(epoch)
        return acc == 1.0

    fit(model, ds.features, StandardObjective(cfg.loss, ds.labels0), cfg, done)
    note(f"{family}: zero training error at epoch {reached[0] if reached else 'never'}")
    assert reached and reached[0] <= 500


# --------------------------------------------------------------------------
# 8

def _interpolate(top, c):
    ks = sorted(top)
    return float(np.interp(c, ks, [top[k] for k in ks]))


@crit(8)
def test_selector_dominates_topk(tmp_path, note):
    cfg = str(CONFIGS / "mixed_difficulty.json")
    out = str(tmp_path)
    t0 = time.perf_counter()
    for cmd in ("train-base", "train-selector", "curve"):
        assert main([cmd, "--config", cfg, "--out", out]) == 0
    elapsed = time.perf_counter() - t0
    with open(os.path.join(out, "curve.csv")) as fh:
        rows = list(csv.DictReader(fh))
    top = {int(float(r["avg_cardinality"])): float(r["accuracy"])
           for r in rows if r["method"] == "top_k"}
    margins = {}
    for r in rows:
        if r["method"] == "cardinality_aware" and r["setting"] != "K=1":
            c, a = float(r["avg_cardinality"]), float(r["accuracy"])
            margins[r["setting"]] = a - _interpolate(top, c)
    note("margins over the top-k curve: "
         + ", ".join(f"{k} {v:+.4f}" for k, v in margins.items()) + f"; {elapsed:.0f} s")
    assert set(margins) == {"K=1-2", "K=1-2-4", "K=1-2-4-8"}
    assert all(m >= 0.0 for m in margins.values())
    assert max(margins.values()) >= 0.005
    assert elapsed <= 900.0


# --------------------------------------------------------------------------
# 9

@crit(9)
def test_verify_bounds_deterministic(tmp_path, note):
    outs = [str(tmp_path / "a"), str(tmp_path / "b")]
    codes = [main(["verify-bounds", "--theorems", "all", "--trials", "100", "--seed", "11",
                   "--out", o]) for o in outs]
    assert codes[0] == codes[1]
    a, b = (_read(os.path.join(o, "verify_bounds.jsonl")) for o in outs)
    note(f"verify-bounds: {len(a)} bytes, identical={a == b}")
    assert a == b


@crit(9)
def test_training_deterministic(tmp_path, note):
    cfg = str(CONFIGS / "mixed_difficulty.json")
    # a shortened copy of the experiment keeps this check quick
    d = json.load(open(cfg))
    d["dataset"]["recipe"]["samples"] = 1500
    d["base"]["epochs"] = 4
    d["selector"]["epochs"] = 3
    small = tmp_path / "cfg.json"
    small.write_text(json.dumps(d))
    outs = [str(tmp_path / "a"), str(tmp_path / "b")]
    for o in outs:
        assert main(["train-base", "--config", str(small), "--out", o]) == 0
        assert main(["train-selector", "--config", str(small), "--out", o]) == 0
    names = sorted(os.listdir(outs[0]))
    same = [_read(os.path.join(outs[0], n)) == _read(os.path.join(outs[1], n)) for n in names]
    note(f"training outputs identical: {sum(same)}/{len(names)} files")
    assert len(names) == 7 and all(same)
