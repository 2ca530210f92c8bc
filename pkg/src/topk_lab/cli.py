"""Command-line entry point.

Exit codes: 0 success, 1 bound violation or failed check, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

from . import config as cfgmod
from .campaign import ALL_THEOREMS, CS_THEOREMS, STANDARD_THEOREMS, resolve_threads, run_campaign, summarize
from .core import Dataset
from .data import SyntheticRecipe, gaussian_clusters, load_features, train_test_split, write_csv, write_raw
from .gradcheck import run_all
from .train import (
    atomic_write_text,
    forward,
    load_checkpoint,
    save_checkpoint,
    selector_metrics,
    topk_accuracies,
    train_base,
    train_selector,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_TEST_FRACTION = 0.3


class UsageError(Exception):
    pass


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed (default: config seed or 0)")
    p.add_argument("--config", default=d, help="experiment config (JSON)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--threads", type=int, default=d,
                   help="worker processes (falls back to TOPK_LAB_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topk-lab", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-bounds", help="Monte Carlo check of the regret bounds")
    _global_flags(v, suppress=True)
    v.add_argument("--theorems", default="all",
                   help="comma list of names, or all / standard / cs")
    v.add_argument("--trials", type=int, default=1000)

    g = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    _global_flags(g, suppress=True)
    g.add_argument("--points", type=int, default=100)

    s = sub.add_parser("synth", help="write a synthetic Gaussian-cluster dataset")
    _global_flags(s, suppress=True)
    s.add_argument("--output", help="dataset path (.csv, or raw float32 with --format raw)")
    s.add_argument("--format", choices=["csv", "raw"], default="csv")
    s.add_argument("--n-classes", type=int, default=3)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--samples", type=int, default=3000)
    s.add_argument("--spread", type=float, default=0.3)
    s.add_argument("--overlap", type=float, default=0.0)
    s.add_argument("--group-size", type=int, default=1)

    for name, hlp in [("train-base", "train the base classifier"),
                      ("train-selector", "train one selector per cardinality set"),
                      ("curve", "emit accuracy versus cardinality rows")]:
        c = sub.add_parser(name, help=hlp)
        _global_flags(c, suppress=True)
        if name != "train-base":
            c.add_argument("--base", help="base checkpoint (default: <out>/base.json)")
    return p


# --------------------------------------------------------------------------
# helpers

def _out_dir(args, cfg: dict | None) -> str:
    out = args.out or (cfg or {}).get("output_dir") or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> dict:
    if not args.config:
        raise UsageError("this command needs --config")
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _seed(args, cfg: dict | None = None) -> int:
    if args.seed is not None:
        return args.seed
    return (cfg or {}).get("seed", 0)


def _datasets(cfg: dict) -> tuple[Dataset, Dataset]:
    d = cfg["dataset"]
    frac = d.get("test_fraction", DEFAULT_TEST_FRACTION)
    if d["source"] == "synthetic":
        ds = gaussian_clusters(cfgmod.recipe(cfg))
    else:
        try:
            ds = load_features(d["path"], d.get("n_classes"))
            if "test_path" in d:
                return ds, load_features(d["test_path"], ds.n)
        except (OSError, ValueError) as err:
            raise UsageError(f"cannot load dataset: {err}") from None
    if frac == 0.0:
        return ds, ds
    return train_test_split(ds, frac, cfg["seed"])


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _history_csv(history: list[dict], extra: dict | None = None) -> tuple[list[str], list[list]]:
    keys = list(history[0].keys()) if history else ["epoch", "loss"]
    extra = extra or {}
    header = list(extra) + keys
    return header, [[extra[k] for k in extra] + [row[k] for k in keys] for row in history]


def _kset_tag(ks) -> str:
    return "-".join(str(k) for k in ks)


def _load_base(args, out: str):
    path = args.base or os.path.join(out, "base.json")
    if not os.path.exists(path):
        raise UsageError(f"missing base checkpoint {path}; run train-base first")
    return load_checkpoint(path)


# --------------------------------------------------------------------------
# commands

def _parse_theorems(text: str) -> list[str]:
    if text == "all":
        return list(ALL_THEOREMS)
    if text == "standard":
        return list(STANDARD_THEOREMS)
    if text == "cs":
        return list(CS_THEOREMS)
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in names if t not in ALL_THEOREMS]
    if bad or not names:
        raise UsageError(f"unknown theorem(s) {bad}; choose from {', '.join(ALL_THEOREMS)}")
    return names


def cmd_verify_bounds(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    theorems = _parse_theorems(args.theorems)
    cfg = cfgmod.load(args.config) if args.config else None
    out = _out_dir(args, cfg)
    reports = run_campaign(theorems, args.trials, _seed(args, cfg), resolve_threads(args.threads))
    lines = [r.to_json() for r in reports]
    atomic_write_text(os.path.join(out, "verify_bounds.jsonl"), "\n".join(lines) + "\n")
    summary = summarize(reports)
    print(f"{'theorem':20s} {'trials':>7s} {'violations':>10s} {'min_slack':>12s}")
    for name in theorems:
        d = summary[name]
        print(f"{name:20s} {d['trials']:7d} {d['violations']:10d} {d['min_slack']:12.4g}")
    return EXIT_FAIL if any(d["violations"] for d in summary.values()) else EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    rows = run_all(_seed(args), args.points)
    print(f"{'check':32s} {'worst_rel_err':>14s} {'tol':>8s}  result")
    for r in rows:
        print(f"{r.name:32s} {r.worst:14.3e} {r.tol:8.0e}  {'pass' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


def cmd_synth(args) -> int:
    if args.config:
        cfg = _load_config(args)
        if cfg["dataset"]["source"] != "synthetic":
            raise UsageError("config dataset is not synthetic")
        recipe = cfgmod.recipe(cfg)
    else:
        try:
            recipe = SyntheticRecipe(args.n_classes, args.dim, args.samples, args.spread,
                                     args.overlap, _seed(args), group_size=args.group_size)
        except ValueError as err:
            raise UsageError(str(err)) from None
    ds = gaussian_clusters(recipe)
    path = args.output or os.path.join(_out_dir(args, None),
                                       "synth.csv" if args.format == "csv" else "synth.f32")
    try:
        (write_csv if args.format == "csv" else write_raw)(ds, path)
    except OSError as err:
        raise UsageError(f"cannot write {path}: {err}") from None
    print(f"wrote {len(ds)} samples, {ds.dim} features, {ds.n} classes to {path}")
    return EXIT_OK


def cmd_train_base(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    train, _ = _datasets(cfg)
    tcfg = cfgmod.train_config(cfg["base"], cfg["seed"])
    history: list[dict] = []
    model = train_base(train, tcfg, cfg["base"]["eval_k"], history)
    save_checkpoint(model, os.path.join(out, "base.json"))
    header, rows = _history_csv(history)
    atomic_write_text(os.path.join(out, "base_log.csv"), _csv_text(header, rows))
    last = history[-1] if history else {}
    print("trained base model: " + ", ".join(f"{k}={v:.6g}" for k, v in last.items()))
    return EXIT_OK


def cmd_train_selector(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    base = _load_base(args, out)
    train, _ = _datasets(cfg)
    tcfg = cfgmod.train_config(cfg["selector"], cfg["seed"])
    header, rows = None, []
    for kset in cfgmod.kset_schedule(cfg, train.n):
        spec = cfgmod.cost_spec(cfg, kset)
        history: list[dict] = []
        sel = train_selector(train, base, spec, tcfg, history)
        tag = _kset_tag(kset.ks)
        save_checkpoint(sel, os.path.join(out, f"selector_k{tag}.json"))
        header, part = _history_csv(history, {"kset": tag})
        rows += part
        acc, card = selector_metrics(train, base, sel, spec)
        print(f"K={{{tag.replace('-', ',')}}}: train accuracy {acc:.4f}, mean cardinality {card:.3f}")
    atomic_write_text(os.path.join(out, "selector_log.csv"),
                      _csv_text(header or ["kset", "epoch", "loss"], rows))
    return EXIT_OK


def cmd_curve(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    base = _load_base(args, out)
    _, test = _datasets(cfg)
    schedule = cfgmod.kset_schedule(cfg, test.n)
    k_top = max(ks.max for ks in schedule)
    acc = topk_accuracies(forward(base, test.features), test.labels0, range(1, k_top + 1))
    rows = [["top_k", f"k={k}", float(k), acc[k]] for k in range(1, k_top + 1)]
    for kset in schedule:
        tag = _kset_tag(kset.ks)
        path = os.path.join(out, f"selector_k{tag}.json")
        if not os.path.exists(path):
            raise UsageError(f"missing selector checkpoint {path}; run train-selector first")
        a, c = selector_metrics(test, base, load_checkpoint(path), cfgmod.cost_spec(cfg, kset))
        rows.append(["cardinality_aware", f"K={tag}", c, a])
    text = _csv_text(["method", "setting", "avg_cardinality", "accuracy"], rows)
    atomic_write_text(os.path.join(out, "curve.csv"), text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "verify-bounds": cmd_verify_bounds,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
    "train-base": cmd_train_base,
    "train-selector": cmd_train_selector,
    "curve": cmd_curve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.threads is not None:
            resolve_threads(args.threads)
        return COMMANDS[args.command](args)
    except (UsageError, cfgmod.ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
